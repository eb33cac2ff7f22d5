"""Explicit log-Sobolev constants for the fOU law and Monte-Carlo checks of the inequality."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import xlogy

from .clark_ocone import _p_units, _pointwise_kernel, eta_integrand
from .errors import ConfigurationError
from .grid import RngSpec
from .kernel import DiscreteKernel, beta, c_H, check_hurst, compute_C2, fit_C1, gamma
from .malliavin import CylindricalFunctional, eval_functional, eval_gradient, gradient_unit_responses
from .mc import RunningMoments
from .simulate import DEFAULT_CHUNK, ModelParams, map_batches, simulate_batch_arrays

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class LSIConstants:
    H: float
    alpha: float
    C1: float
    C2: float
    c_H: float
    C: float
    C_hat: float
    lsi_factor: float

    def as_dict(self) -> dict:
        return asdict(self)


def constant_C(H: float, C2: float) -> float:
    g2 = gamma(1.5 - H) ** 2 * (2 - 2 * H)
    return (1.0 + 4.0 + C2 * C2 * (H - 0.5) ** 2) / g2


def constant_C_hat(H: float, C1: float, C2: float, cH: float) -> float:
    g = gamma(1.5 - H) ** 2
    g2 = g * (2 - 2 * H)
    b = beta(H - 0.5, 1.5 - H)
    return (
        C1 * C1 / g2
        + 4.0 * C1 * C1 / g2
        + 2.0 * cH * cH * (b * b + 1.0 / (H - 0.5) ** 2) / g
        + C1 * C1 * C2 * C2 * (H - 0.5) ** 2 / g2
    )


def lsi_constants(
    H: float, alpha: float, C1: float | None = None, C2: float | None = None, cH: float | None = None
) -> LSIConstants:
    """C, Ĉ and the factor 4(1 + 4α⁴e^{2α}C1²(1+α²)C/(2-2H) + 2α²Ĉ/(2-2H))."""
    H = check_hurst(H)
    if not np.isfinite(alpha) or alpha < 0:
        raise ConfigurationError("alpha must be >= 0")
    C1 = fit_C1(H) if C1 is None else C1
    C2 = compute_C2(H) if C2 is None else C2
    cH = c_H(H) if cH is None else cH
    C = constant_C(H, C2)
    Ch = constant_C_hat(H, C1, C2, cH)
    if alpha == 0:
        factor = 4.0
    else:
        a2 = alpha * alpha
        factor = 4.0 * (
            1.0
            + 4.0 * a2 * a2 * np.exp(2 * alpha) * C1 * C1 * (1 + a2) * C / (2 - 2 * H)
            + 2.0 * a2 * Ch / (2 - 2 * H)
        )
    return LSIConstants(H, float(alpha), C1, C2, cH, C, Ch, float(factor))


# entropy -------------------------------------------------------------------------


def plugin_entropy(G: np.ndarray) -> float:
    """mean(G ln G) - mean(G) ln mean(G), with 0 ln 0 = 0."""
    G = np.asarray(G, dtype=float)
    m = G.mean()
    return float(np.mean(xlogy(G, G)) - xlogy(m, m))


@dataclass(frozen=True)
class EntropyEstimate:
    entropy: float
    se: float
    n_paths: int
    degenerate: bool


def _entropy_from_moments(acc: RunningMoments, cols=(0, 1)) -> tuple[float, float]:
    i, k = cols
    m1, m2 = acc.mean[i], acc.mean[k]
    ent = m1 - xlogy(m2, m2)
    grad = np.zeros(len(acc.mean))
    grad[i] = 1.0
    grad[k] = -(np.log(m2) + 1.0) if m2 > 0 else 0.0
    var = grad @ acc.cov @ grad / acc.count
    return float(ent), float(np.sqrt(max(var, 0.0)))


def entropy_mc(
    F: CylindricalFunctional,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    chunk: int = DEFAULT_CHUNK,
) -> EntropyEstimate:
    """Plug-in Ent(F²) with a delta-method standard error."""
    def values(batch):
        return np.asarray(eval_functional(F, batch.fou, kernel.grid), dtype=float) ** 2

    acc = RunningMoments()
    chunks = map_batches(values, params, kernel, n_paths, rng, chunk)
    for G in chunks:
        acc.add(np.column_stack([xlogy(G, G), G]))
    first = chunks[0][0]
    if all(np.all(G == first) for G in chunks):
        return EntropyEstimate(0.0, 0.0, acc.count, True)
    ent, se = _entropy_from_moments(acc)
    return EntropyEstimate(ent, se, acc.count, False)


def gradient_energy(F: CylindricalFunctional, fou: np.ndarray, kernel: DiscreteKernel) -> np.ndarray:
    """∫_0^1 |(K^{-1}DF)_s|² ds per path."""
    grad = eval_gradient(F, fou, kernel.grid)
    R = gradient_unit_responses(F, kernel)
    g = np.einsum("mj,pmd->pjd", R, grad)
    return np.sum(g * g, axis=(-2, -1)) * kernel.grid.dt


@dataclass(frozen=True)
class EntropyReport:
    label: str
    entropy: float
    energy: float
    rhs: float
    margin: float
    se: float
    lsi_factor: float
    n_paths: int

    def passed(self, n_se: float = 3.0) -> bool:
        return self.margin >= -n_se * self.se


def lsi_check(
    F: CylindricalFunctional,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    constants: LSIConstants | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> EntropyReport:
    return lsi_check_many([F], params, kernel, n_paths, rng, constants, chunk)[0]


def lsi_check_many(
    functionals,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    constants: LSIConstants | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> list[EntropyReport]:
    """Ent(F²) against lsi_factor · Ê∫|K^{-1}DF|² for several F on shared paths.

    margin = RHS - LHS; its SE is the delta-method error of the three means
    (energy, G ln G, G) with G = F².
    """
    consts = constants or lsi_constants(params.H, params.alpha)
    lam = consts.lsi_factor
    def rows(batch):
        out = []
        for F in functionals:
            G = np.asarray(eval_functional(F, batch.fou, kernel.grid), dtype=float) ** 2
            Q = gradient_energy(F, batch.fou, kernel)
            out.append(np.column_stack([Q, xlogy(G, G), G]))
        return out

    accs = [RunningMoments() for _ in functionals]
    for per_f in map_batches(rows, params, kernel, n_paths, rng, chunk):
        for acc, r in zip(accs, per_f):
            acc.add(r)
    out = []
    for F, acc in zip(functionals, accs):
        q, _, mg = acc.mean
        ent = acc.mean[1] - xlogy(mg, mg)
        # entropy is nonnegative; anything at rounding level of its two terms is zero
        if abs(ent) <= 64 * EPS * max(abs(acc.mean[1]), abs(xlogy(mg, mg))):
            ent = 0.0
        grad = np.array([lam, -1.0, (np.log(mg) + 1.0) if mg > 0 else 0.0])
        se = float(np.sqrt(max(grad @ acc.cov @ grad / acc.count, 0.0)))
        if np.all(np.diag(acc.cov) <= (64 * EPS * np.abs(acc.mean)) ** 2):
            se = 0.0
        rhs = lam * q
        out.append(EntropyReport(F.label, float(ent), float(q), float(rhs), float(rhs - ent), se, lam, acc.count))
    return out


# pathwise intermediate bounds --------------------------------------------------------


@dataclass(frozen=True)
class IntermediateBounds:
    """Worst ratios lhs / rhs over sampled paths and times (≤ 1 means the bound holds)."""

    tail_ratio: float
    kernel_tail_ratio: float
    n_paths: int

    @property
    def holds(self) -> bool:
        return self.tail_ratio <= 1.0 and self.kernel_tail_ratio <= 1.0


def intermediate_bounds(
    F: CylindricalFunctional,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    constants: LSIConstants | None = None,
) -> IntermediateBounds:
    """Check (∫_t^1 P)² ≤ C ‖g‖² and (∫_t^1 K(s,t) P_s ds)² ≤ Ĉ t^{1-2H} ‖g‖² pathwise.

    P is the regularized P at cell midpoints; g = K^{-1}DF from the matrix route.
    """
    consts = constants or lsi_constants(params.H, params.alpha)
    batch = simulate_batch_arrays(params, kernel, n_paths, rng)
    grid = kernel.grid
    dt = grid.dt
    grad = eval_gradient(F, batch.fou, grid)
    P = np.einsum("mk,pmd->pkd", _p_units(F, kernel, "quadrature"), grad)
    energy = gradient_energy(F, batch.fou, kernel)[:, None]
    # ∫_{t_k}^1 P for nodes k = 0..n-1
    tail = np.flip(np.cumsum(np.flip(P, axis=1), axis=1), axis=1) * dt
    lhs1 = np.sum(tail * tail, axis=-1)
    # ∫_{mid_l}^1 K(s, mid_l) P_s ds with s on right nodes t_k, P at node = next cell
    P_node = np.concatenate([P[:, 1:], np.zeros_like(P[:, :1])], axis=1)
    kt = dt * np.einsum("kl,pkd->pld", _pointwise_kernel(kernel.H, kernel.n), P_node)
    lhs2 = np.sum(kt * kt, axis=-1)
    weight = grid.midpoints ** (1 - 2 * kernel.H)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(lhs1 > 0, lhs1 / (consts.C * energy), 0.0)
        r2 = np.where(lhs2 > 0, lhs2 / (consts.C_hat * weight * energy), 0.0)
    return IntermediateBounds(float(r1.max()), float(r2.max()), n_paths)


# identity check for Ent(G) ------------------------------------------------------------


@dataclass(frozen=True)
class EntropyIdentityReport:
    entropy: float
    half_energy: float
    difference: float
    se: float
    z_score: float
    n_paths: int


def entropy_identity_check(
    F: CylindricalFunctional,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    eps: float = 1e-3,
) -> EntropyIdentityReport:
    """Ent(G) = ½ E∫|η^G|²/G_t dt for G = F² + eps with F linear.

    With deterministic η^F from the exact representation, m_t = Σ_{k<t} <η^F, ΔB>
    is E[F | F_t] - E F, v_t = Σ_{k≥t} |η^F_k|² dt the conditional variance,
    G_t = (E F + m_t)² + v_t + eps and η^G = 2 (E F + m_t) η^F.
    """
    grid = kernel.grid
    dt = grid.dt
    def rows(batch):
        eta = eta_integrand(F, params, kernel, batch, "exact", "matrix")[0]
        fx = np.asarray(eval_functional(F, batch.fou, grid), dtype=float)
        incr = np.sum(eta[None] * batch.increments, axis=-1)
        m = np.concatenate([np.zeros((incr.shape[0], 1)), np.cumsum(incr, axis=1)[:, :-1]], axis=1)
        e2 = np.sum(eta * eta, axis=-1)
        v = np.flip(np.cumsum(np.flip(e2))) * dt
        Gt = m * m + v[None] + eps
        q = 0.5 * np.sum(4.0 * m * m * e2[None] / Gt, axis=1) * dt
        G = fx * fx + eps
        return np.column_stack([q, xlogy(G, G), G])

    acc = RunningMoments()
    for r in map_batches(rows, params, kernel, n_paths, rng):
        acc.add(r)
    mq, _, mg = acc.mean
    ent = acc.mean[1] - xlogy(mg, mg)
    grad = np.array([-1.0, 1.0, -(np.log(mg) + 1.0)])
    se = float(np.sqrt(grad @ acc.cov @ grad / acc.count))
    diff = float(ent - mq)
    return EntropyIdentityReport(float(ent), float(mq), diff, se, diff / se, acc.count)
