"""Pull-back drift, Girsanov density and the Monte-Carlo integration-by-parts check."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InsufficientSampleError
from .fracops import CMElement, apply_K, apply_K_inverse_matrix, inner_product, volterra_marchaud
from .grid import RngSpec, TimeGrid
from .kernel import DiscreteKernel, compute_C2, fit_C1, gamma, inverse_normalization
from .malliavin import CylindricalFunctional, directional_derivative, eval_functional
from .mc import RunningMoments
from .quadrature import composite_rule
from .simulate import DEFAULT_CHUNK, ModelParams, map_batches

MIN_PATHS = 100


@dataclass(frozen=True)
class PullbackDrift:
    beta: np.ndarray
    source_h: np.ndarray
    alpha: float
    kh: np.ndarray


@dataclass(frozen=True)
class GirsanovDensity:
    r: float
    log_rho: np.ndarray
    integrand: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)


def _h_array(h) -> np.ndarray:
    return np.asarray(h.h_values if isinstance(h, CMElement) else h, dtype=float)


def pullback_drift(h, alpha: float, kernel: DiscreteKernel) -> PullbackDrift:
    """β = (Kh)' + alpha Kh on cells, with the forward difference for (Kh)'.

    Batched over leading axes of ``h`` (..., n, dim).
    """
    hv = _h_array(h)
    kh = apply_K(kernel, hv)
    dt = kernel.grid.dt
    beta = np.diff(kh, axis=-2) / dt + alpha * kh[..., :-1, :]
    return PullbackDrift(beta, hv, alpha, kh)


def j_integrand(drift: PullbackDrift, kernel: DiscreteKernel) -> np.ndarray:
    """j = K^{-1} ∫_0^· β through a cumulative sum and the triangular solve."""
    G = np.zeros(drift.kh.shape)
    G[..., 1:, :] = np.cumsum(drift.beta, axis=-2) * kernel.grid.dt
    return apply_K_inverse_matrix(kernel, G)


def j_from_h(h, alpha: float, kernel: DiscreteKernel) -> np.ndarray:
    return j_integrand(pullback_drift(h, alpha, kernel), kernel)


def j_second_route(h, alpha: float, kernel: DiscreteKernel) -> np.ndarray:
    """h + alpha K^{-1}(∫_0^· Kh) with the left Riemann sum for the time integral."""
    hv = _h_array(h)
    kh = apply_K(kernel, hv)
    integral = np.zeros_like(kh)
    integral[..., 1:, :] = np.cumsum(kh[..., :-1, :], axis=-2) * kernel.grid.dt
    return hv + alpha * apply_K_inverse_matrix(kernel, integral)


@dataclass(frozen=True)
class JDecomposition:
    """j = h + I1 + I2 + I3 on cell midpoints (quadrature of the Marchaud form)."""

    h: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.h + self.I1 + self.I2 + self.I3


def _interp_path(grid: TimeGrid, values: np.ndarray) -> Callable:
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.interp(x, grid.points, values[:, k]) for k in range(values.shape[1])], axis=-1)

    return f


def j_decomposition(h, alpha: float, kernel: DiscreteKernel, n_panels: int | None = None) -> JDecomposition:
    """The three correction terms of j for a single deterministic or sampled h.

    Kh is interpolated linearly between nodes; the singular integrals use
    power-transformed panels.  Values are at cell midpoints.
    """
    H = kernel.H
    grid = kernel.grid
    hv = _h_array(h)
    kh = apply_K(kernel, hv)
    khf = _interp_path(grid, kh)
    s = grid.midpoints
    n_panels = n_panels or grid.n_steps
    lead = alpha / (gamma(1.5 - H) * inverse_normalization(H))
    gam = H - 0.5

    I1 = lead * s[:, None] ** (-gam) * khf(s)

    u, w = composite_rule(np.zeros_like(s), s, n_panels, 4, right_exp=0.5 - H)
    weight = (s[:, None] ** (-gam) - u ** (-gam)) / (s[:, None] - u) ** (0.5 + H)
    vals = khf(u.reshape(-1)).reshape(u.shape + (hv.shape[-1],))
    I2 = lead * gam * s[:, None] ** gam * np.einsum("ij,ij,ijd->id", w, weight, vals)

    I3 = lead * gam * volterra_marchaud(H, s, khf, n_panels)
    return JDecomposition(hv, I1, I2, I3)


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    h_norm2: float
    I3_norm2: float
    factor: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def j_bound_factor(H: float, alpha: float, C1: float | None = None, C2: float | None = None) -> float:
    """4 (1 + a² + b²), the h-proportional part of the L² bound on j."""
    C1 = fit_C1(H) if C1 is None else C1
    C2 = compute_C2(H) if C2 is None else C2
    den = gamma(1.5 - H) * np.sqrt((2 - 2 * H) * (4 - 4 * H))
    a = alpha * C1 / den
    b = (H - 0.5) * alpha * C1 * C2 / den
    return 4.0 * (1.0 + a * a + b * b)


def j_bound_check(h, alpha: float, kernel: DiscreteKernel, C1=None, C2=None) -> BoundCheck:
    """‖j‖² ≤ 4(1 + a² + b²)‖h‖² + 4‖I3‖², with I3 measured by quadrature."""
    dt = kernel.grid.dt
    hv = _h_array(h)
    j = j_from_h(hv, alpha, kernel)
    I3 = j_decomposition(hv, alpha, kernel).I3
    fac = j_bound_factor(kernel.H, alpha, C1, C2)
    hn = inner_product(hv, hv, dt)
    i3 = inner_product(I3, I3, dt)
    return BoundCheck(inner_product(j, j, dt), fac * hn + 4.0 * i3, hn, i3, fac)


def girsanov_density(j: np.ndarray, increments: np.ndarray, r: float, dt: float) -> GirsanovDensity:
    """log ρ_{t_i} = -r Σ_{k<i} <j_k, ΔB_k> - r²/2 Σ_{k<i} |j_k|² dt, batched."""
    j = np.asarray(j, dtype=float)
    steps = -r * np.sum(j * increments, axis=-1) - 0.5 * r * r * np.sum(j * j, axis=-1) * dt
    log_rho = np.zeros(steps.shape[:-1] + (steps.shape[-1] + 1,))
    log_rho[..., 1:] = np.cumsum(steps, axis=-1)
    return GirsanovDensity(r, log_rho, j)


# directions -----------------------------------------------------------------


@dataclass(frozen=True)
class Direction:
    """A direction h: deterministic (``profile`` of t) or adapted (``adapted`` of bm)."""

    label: str
    profile: Callable[[np.ndarray], np.ndarray] | None = None
    adapted: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def deterministic(self) -> bool:
        return self.adapted is None

    def values(self, grid: TimeGrid, dim: int, bm: np.ndarray | None = None) -> np.ndarray:
        """Cell values: (n, dim) if deterministic, else (paths, n, dim) from left-node bm."""
        if self.adapted is None:
            v = self.profile(grid.points[:-1])
            return np.repeat(np.asarray(v, dtype=float)[:, None], dim, axis=1)
        if bm is None:
            raise ConfigurationError(f"direction {self.label!r} needs the driving Brownian path")
        return self.adapted(bm[..., :-1, :])


DIRECTIONS = {
    "const1": Direction("const1", profile=lambda t: np.ones_like(t)),
    "ramp": Direction("ramp", profile=lambda t: t),
    "sine": Direction("sine", profile=lambda t: np.sin(2 * np.pi * t)),
    "adapted_tanh": Direction("adapted_tanh", adapted=np.tanh),
}


def direction_by_label(label: str) -> Direction:
    try:
        return DIRECTIONS[label]
    except KeyError:
        raise ConfigurationError(f"unknown direction {label!r}; choose from {sorted(DIRECTIONS)}") from None


# Monte-Carlo checks -----------------------------------------------------------


@dataclass(frozen=True)
class IBPReport:
    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float
    se_diff: float
    z_score: float
    n_paths: int

    def passed(self, z_max: float = 3.0) -> bool:
        return abs(self.z_score) <= z_max


def _need_paths(n_paths: int) -> None:
    if n_paths < MIN_PATHS:
        raise InsufficientSampleError(f"need at least {MIN_PATHS} paths, got {n_paths}")


def ibp_terms(
    F: CylindricalFunctional, direction: Direction, params: ModelParams, kernel: DiscreteKernel, batch
) -> tuple[np.ndarray, np.ndarray]:
    """Per-path F(X) Σ<j_k, ΔB_k> and D_h F(X) on one shared batch."""
    grid = kernel.grid
    h = direction.values(grid, params.dim, batch.bm)
    drift = pullback_drift(h, params.alpha, kernel)
    j = j_integrand(drift, kernel)
    stoch = np.sum(j * batch.increments, axis=(-2, -1))
    fx = eval_functional(F, batch.fou, grid)
    kh = np.broadcast_to(drift.kh, batch.fou.shape)
    dh = directional_derivative(F, batch.fou, CMElement(grid, h, kh), kernel)
    return fx * stoch, np.asarray(dh, dtype=float)


def ibp_check(
    F: CylindricalFunctional,
    direction: Direction,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    chunk: int = DEFAULT_CHUNK,
) -> IBPReport:
    """Paired Monte-Carlo test of E[F ∫<j, dB>] = E[D_h F]."""
    _need_paths(n_paths)
    def terms(batch):
        lhs, rhs = ibp_terms(F, direction, params, kernel, batch)
        return np.column_stack([lhs, rhs, lhs - rhs])

    acc = RunningMoments()
    for rows in map_batches(terms, params, kernel, n_paths, rng, chunk):
        acc.add(rows)
    return _report(acc)


def ibp_check_many(
    functionals,
    directions,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    chunk: int = DEFAULT_CHUNK,
) -> dict[tuple[str, str], IBPReport]:
    """ibp_check for every (F, h) pair on one shared set of paths."""
    _need_paths(n_paths)
    pairs = [(F, d) for F in functionals for d in directions]

    def terms(batch):
        out = []
        for F, d in pairs:
            lhs, rhs = ibp_terms(F, d, params, kernel, batch)
            out.append(np.column_stack([lhs, rhs, lhs - rhs]))
        return out

    accs = [RunningMoments() for _ in pairs]
    for per_pair in map_batches(terms, params, kernel, n_paths, rng, chunk):
        for acc, rows in zip(accs, per_pair):
            acc.add(rows)
    return {(F.label, d.label): _report(acc) for (F, d), acc in zip(pairs, accs)}


def _report(acc: RunningMoments) -> IBPReport:
    se = acc.se
    diff = acc.mean[2]
    z = diff / se[2] if se[2] > 0 else (0.0 if diff == 0 else np.inf)
    return IBPReport(
        float(acc.mean[0]), float(acc.mean[1]), float(se[0]), float(se[1]), float(se[2]), float(z), acc.count
    )


@dataclass(frozen=True)
class DensityReport:
    mean_rho: float
    se: float
    z_score: float
    r: float
    n_paths: int


def density_normalization(
    direction: Direction,
    params: ModelParams,
    kernel: DiscreteKernel,
    r: float,
    n_paths: int,
    rng: RngSpec,
    chunk: int = DEFAULT_CHUNK,
) -> DensityReport:
    """Monte-Carlo mean of ρ_1; the martingale property predicts 1."""
    _need_paths(n_paths)
    if not -1.0 <= r <= 1.0:
        raise ConfigurationError("r must lie in [-1, 1]")
    def terminal(batch):
        h = direction.values(kernel.grid, params.dim, batch.bm)
        j = np.broadcast_to(j_from_h(h, params.alpha, kernel), batch.increments.shape)
        return girsanov_density(j, batch.increments, r, kernel.grid.dt).rho[:, -1]

    acc = RunningMoments()
    for rho in map_batches(terminal, params, kernel, n_paths, rng, chunk):
        acc.add(rho)
    se = float(acc.se[0])
    m = float(acc.mean[0])
    return DensityReport(m, se, (m - 1.0) / se if se > 0 else 0.0, r, acc.count)
