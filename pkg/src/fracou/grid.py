"""Uniform time grids on [0, 1], sampled paths and seeded noise streams."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidGridError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_k = k / n_steps`` of the unit interval."""

    n_steps: int
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) / self.n_steps

    def index_of(self, t: float, atol: float = 1e-12) -> int | None:
        """Grid index of time ``t``, or None when ``t`` is off-grid."""
        k = int(round(t * self.n_steps))
        if 0 <= k <= self.n_steps and abs(k / self.n_steps - t) <= atol:
            return k
        return None


def make_grid(n_steps: int) -> TimeGrid:
    if int(n_steps) != n_steps or n_steps < 2:
        raise InvalidGridError(f"need an integer n_steps >= 2, got {n_steps!r}")
    n_steps = int(n_steps)
    points = np.arange(n_steps + 1) / n_steps
    points.setflags(write=False)
    return TimeGrid(n_steps, points)


@dataclass(frozen=True)
class VecPath:
    """Vector-valued path sampled on a grid; ``values`` has shape (n_steps + 1, dim)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.n_steps + 1:
            raise DimensionError(f"path values must be (n_steps+1, dim), got {v.shape}")
        if np.any(v[0] != 0.0):
            raise ValueError("paths start at zero")
        if not np.all(np.isfinite(v)):
            raise ValueError("path has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RngSpec:
    """Identifies one reproducible noise stream.

    Streams are Philox counter blocks: the key is the master seed and the
    stream id occupies the top counter word, so distinct ids never overlap.
    """

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = int(self.master_seed) % (1 << 64)
        counter = [0, 0, 0, int(self.stream_id) % (1 << 64)]
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def offset(self, k: int) -> "RngSpec":
        return RngSpec(self.master_seed, self.stream_id + k)


def sample_bm_increments(grid: TimeGrid, dim: int, rng: RngSpec) -> np.ndarray:
    """Brownian increments of shape (n_steps, dim) with variance ``dt`` per entry."""
    if dim < 1:
        raise DimensionError("dim must be >= 1")
    z = rng.generator().standard_normal((grid.n_steps, dim))
    return z * np.sqrt(grid.dt)


def sample_bm_increments_batch(
    grid: TimeGrid, dim: int, base: RngSpec, n_paths: int
) -> np.ndarray:
    """Increments for paths ``base.stream_id + i``, shape (n_paths, n_steps, dim)."""
    out = np.empty((n_paths, grid.n_steps, dim))
    for i in range(n_paths):
        out[i] = sample_bm_increments(grid, dim, base.offset(i))
    return out
