"""Brownian, fractional Brownian and fractional OU paths from shared noise."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, TextIO

import numpy as np

from .errors import ConfigurationError, DimensionError
from .fracops import apply_K
from .grid import RngSpec, VecPath, sample_bm_increments_batch
from .kernel import DiscreteKernel, check_hurst

SCHEMES = ("euler", "exponential")
DEFAULT_CHUNK = 8192


@dataclass(frozen=True)
class ModelParams:
    """fOU parameters.  ``alpha = 0`` is only allowed with ``test_mode``."""

    H: float
    alpha: float
    dim: int = 1
    test_mode: bool = False

    def __post_init__(self):
        check_hurst(self.H)
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if self.alpha == 0 and not self.test_mode:
            raise ConfigurationError("alpha = 0 requires test_mode=True")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DimensionError(f"dim must be a positive integer, got {self.dim}")


@dataclass(frozen=True)
class PathBundle:
    bm: VecPath
    fbm: VecPath
    fou: VecPath
    increments: np.ndarray
    rng: RngSpec


@dataclass(frozen=True)
class PathBatch:
    """Stacked paths, arrays of shape (n_paths, n_steps + 1, dim)."""

    bm: np.ndarray
    fbm: np.ndarray
    fou: np.ndarray
    increments: np.ndarray
    base: RngSpec

    @property
    def n_paths(self) -> int:
        return self.bm.shape[0]

    def bundle(self, i: int, grid) -> PathBundle:
        return PathBundle(
            VecPath(grid, self.bm[i]),
            VecPath(grid, self.fbm[i]),
            VecPath(grid, self.fou[i]),
            self.increments[i],
            self.base.offset(i),
        )


def _check(params: ModelParams, kernel: DiscreteKernel) -> None:
    if abs(params.H - kernel.H) > 1e-12:
        raise ConfigurationError(f"kernel built for H={kernel.H}, params have H={params.H}")


def fou_from_fbm(fbm: np.ndarray, alpha: float, dt: float, scheme: str = "euler") -> np.ndarray:
    """Drive dX = -alpha X dt + dB^H along axis -2 of ``fbm``.

    ``euler``: X_{i+1} = X_i - alpha X_i dt + ΔB^H_i, evaluated as
    X_i = B^H_i - alpha dt Σ_{j<i} X_j so that alpha = 0 returns fbm exactly.
    ``exponential``: X_{i+1} = e^{-alpha dt} X_i + ΔB^H_i.
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    x = np.zeros_like(fbm)
    n = fbm.shape[-2] - 1
    if scheme == "euler":
        s = np.zeros(fbm.shape[:-2] + fbm.shape[-1:])
        for i in range(n):
            s += x[..., i, :]
            x[..., i + 1, :] = fbm[..., i + 1, :] - alpha * dt * s
    else:
        damp = np.exp(-alpha * dt)
        for i in range(n):
            x[..., i + 1, :] = damp * x[..., i, :] + fbm[..., i + 1, :] - fbm[..., i, :]
    return x


def paths_from_increments(
    params: ModelParams, kernel: DiscreteKernel, increments: np.ndarray, scheme: str = "euler"
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(bm, fbm, fou) arrays driven by ``increments`` of shape (..., n, dim)."""
    _check(params, kernel)
    dt = kernel.grid.dt
    bm = np.zeros(increments.shape[:-2] + (kernel.n + 1, increments.shape[-1]))
    bm[..., 1:, :] = np.cumsum(increments, axis=-2)
    fbm = apply_K(kernel, increments / dt)
    fou = fou_from_fbm(fbm, params.alpha, dt, scheme)
    return bm, fbm, fou


def simulate_batch_arrays(
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    base: RngSpec,
    scheme: str = "euler",
) -> PathBatch:
    """Paths ``base.stream_id + i`` for i < n_paths, stacked."""
    if n_paths < 1:
        raise ConfigurationError("n_paths must be >= 1")
    _check(params, kernel)
    inc = sample_bm_increments_batch(kernel.grid, params.dim, base, n_paths)
    bm, fbm, fou = paths_from_increments(params, kernel, inc, scheme)
    return PathBatch(bm, fbm, fou, inc, base)


def iter_batches(
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    base: RngSpec,
    chunk: int = DEFAULT_CHUNK,
    scheme: str = "euler",
) -> Iterator[PathBatch]:
    """Chunks of a large batch; results never depend on ``chunk``."""
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        yield simulate_batch_arrays(params, kernel, m, base.offset(done), scheme)
        done += m


_THREADS = 1


def set_threads(k: int) -> None:
    """Cap the worker threads used by ``map_batches``."""
    global _THREADS
    if k < 1:
        raise ConfigurationError("threads must be >= 1")
    _THREADS = int(k)


def map_batches(
    fn: Callable[[PathBatch], object],
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    base: RngSpec,
    chunk: int = DEFAULT_CHUNK,
    scheme: str = "euler",
) -> list:
    """fn applied to every chunk, results in chunk order.

    Chunks are independent streams, so running them on a thread pool does
    not change any result.
    """
    starts = range(0, n_paths, chunk)

    def run(start):
        m = min(chunk, n_paths - start)
        return fn(simulate_batch_arrays(params, kernel, m, base.offset(start), scheme))

    if _THREADS == 1 or len(starts) == 1:
        return [run(s) for s in starts]
    with ThreadPoolExecutor(max_workers=_THREADS) as pool:
        return list(pool.map(run, starts))


def simulate_bundle(
    params: ModelParams, kernel: DiscreteKernel, rng: RngSpec, scheme: str = "euler"
) -> PathBundle:
    return simulate_batch_arrays(params, kernel, 1, rng, scheme).bundle(0, kernel.grid)


def simulate_batch(
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    base_rng: RngSpec,
    scheme: str = "euler",
) -> list[PathBundle]:
    batch = simulate_batch_arrays(params, kernel, n_paths, base_rng, scheme)
    return [batch.bundle(i, kernel.grid) for i in range(n_paths)]


def ou_variance(alpha: float, t: float = 1.0) -> float:
    """Var X_t for the Brownian OU process dX = -alpha X dt + dB, X_0 = 0."""
    if alpha == 0:
        return t
    return (1.0 - np.exp(-2.0 * alpha * t)) / (2.0 * alpha)


def _columns(dim: int) -> list[str]:
    return [f"{name}_{k + 1}" for name in ("bm", "fbm", "fou") for k in range(dim)]


def write_paths_csv(
    fh: TextIO, times: np.ndarray, batch: PathBatch, path_ids=None, long_format: bool = True
) -> None:
    """Rows ``t, bm_*, fbm_*, fou_*``; with ``long_format`` a leading ``path_id``."""
    dim = batch.bm.shape[-1]
    w = csv.writer(fh, lineterminator="\n")
    head = ["t"] + _columns(dim)
    w.writerow(["path_id"] + head if long_format else head)
    ids = range(batch.n_paths) if path_ids is None else path_ids
    for p, pid in enumerate(ids):
        block = np.concatenate([batch.bm[p], batch.fbm[p], batch.fou[p]], axis=1)
        for i, t in enumerate(times):
            row = [repr(float(t))] + [repr(float(v)) for v in block[i]]
            w.writerow([str(pid)] + row if long_format else row)
