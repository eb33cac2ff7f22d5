"""Explicit martingale-representation integrand η for fOU functionals.

Two routes build the response of η to the gradient coefficients c_i = ∇^i f:

``matrix``      the exact grid adjoint of the maps j -> h built from the
                kernel matrix; for linear F the representation is exact.
``quadrature``  the kernel evaluated pointwise at cell midpoints and P from
                the regularized (Marchaud-type) difference form; its residual
                measures discretization error and shrinks with n.

Everything is linear in the c_i, so per functional time a unit response
over cells is precomputed and combined per path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateFunctionalError,
    EstimatorError,
    RegularizationError,
)
from .fracops import apply_K, apply_K_adjoint_inverse, apply_K_inverse_matrix
from .grid import RngSpec
from .kernel import DiscreteKernel, eval_kernel, gamma, inverse_normalization
from .malliavin import CylindricalFunctional, eval_functional, eval_gradient, gradient_unit_responses
from .quadrature import composite_rule, graded_breaks
from .simulate import ModelParams, PathBatch, simulate_batch_arrays

ROUTES = ("matrix", "quadrature")
ESTIMATORS = ("auto", "exact", "regression")


# grid maps -------------------------------------------------------------------


def exp_running_integral(x: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    """W_i = Σ_{k<i} dt (1 - alpha dt)^{i-1-k} x_k along axis -2 (node values)."""
    rho = 1.0 - alpha * dt
    w = np.zeros_like(x)
    for i in range(1, x.shape[-2]):
        w[..., i, :] = rho * w[..., i - 1, :] + dt * x[..., i - 1, :]
    return w


def map_j_to_h(j, alpha: float, kernel: DiscreteKernel) -> np.ndarray:
    """h = K^{-1}(Kj - alpha W(Kj)); inverts the h -> j map on the grid."""
    kj = apply_K(kernel, np.asarray(j, dtype=float))
    return apply_K_inverse_matrix(kernel, kj - alpha * exp_running_integral(kj, alpha, kernel.grid.dt))


def delta_term(j, alpha: float, kernel: DiscreteKernel) -> np.ndarray:
    """δ_k = alpha² W_k - alpha (Kj)_k at left nodes, shape (..., n, dim)."""
    kj = apply_K(kernel, np.asarray(j, dtype=float))
    w = exp_running_integral(kj, alpha, kernel.grid.dt)
    return (alpha * alpha * w - alpha * kj)[..., :-1, :]


def p_from_gradient_matrix(g, kernel: DiscreteKernel) -> np.ndarray:
    """P_k = Σ_{m≥k} (M^{-T} g)_m, the grid adjoint partner of δ."""
    x = apply_K_adjoint_inverse(kernel, np.asarray(g, dtype=float))
    return np.flip(np.cumsum(np.flip(x, axis=-2), axis=-2), axis=-2)


def correction_matrix(P, alpha: float, kernel: DiscreteKernel) -> np.ndarray:
    """ζ with Σ_k <P_k, δ_k> dt = Σ_q <ζ_q, j_q> dt for every j."""
    P = np.asarray(P, dtype=float)
    dt = kernel.grid.dt
    rho = 1.0 - alpha * dt
    n = kernel.n
    U = np.zeros_like(P)
    for k in range(n - 2, -1, -1):
        U[..., k, :] = rho * U[..., k + 1, :] + dt * P[..., k + 1, :]
    w = alpha * alpha * U - alpha * P
    shifted = np.zeros_like(w)
    shifted[..., :-1, :] = w[..., 1:, :]
    return dt * np.einsum("mq,...md->...qd", kernel.matrix, shifted)


# regularized P -----------------------------------------------------------------


def p_unit_regularized(H: float, T: float, t: np.ndarray, order: int = 8, extra_levels: int = 2, right_levels: int = 24
) -> np.ndarray:
    """P at times ``t`` for g = K(T, ·) on (0, T), zero after T.

    Uses P_t = [g_t (T-t)^{1/2-H} + (H-1/2) ∫_t^T (g_t - (v/t)^{H-1/2} g_v)/(v-t)^{1/2+H} dv]
    / (Γ(3/2-H) c_H Γ(H-1/2)); the part of the integral beyond T is folded
    into the boundary term in closed form.  The exact value is 1 for t < T.
    Panels on [t, T] are refined geometrically toward t down to the scale
    t/4 on which (v/t)^{H-1/2} varies (finer panels only amplify the
    cancellation in the numerator) and toward T, where g_v mixes a smooth
    part with (T-v)^{H-1/2}.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.flatnonzero(t < T)
    gam = H - 0.5
    norm = gamma(1.5 - H) * inverse_normalization(H)
    if inside.size:
        ti = t[inside]
        levels = np.clip(np.ceil(np.log2(4.0 * (T - ti) / ti)), 0, 60).astype(int) + extra_levels
        vals = np.empty_like(ti)
        for lev in np.unique(levels):
            sel = levels == lev
            tt = ti[sel]
            gt = eval_kernel(H, T, tt)
            # integrate in the offset d = v - t so small panels keep full precision
            d, w = composite_rule(
                np.zeros_like(tt), T - tt, 0, order, left_exp=0.5 - H, breaks=graded_breaks(lev, right_levels=right_levels)
            )
            v = tt[:, None] + d
            gv = eval_kernel(H, T, np.minimum(v, T))
            num = gt[:, None] - (v / tt[:, None]) ** gam * gv
            integral = np.sum(w * num / d ** (0.5 + H), axis=1)
            vals[sel] = (gt * (T - tt) ** (-gam) + gam * integral) / norm
        out[inside] = vals
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise RegularizationError(f"non-finite P at t={t[bad[0]]:.6g}")
    return out


def p_term(F: CylindricalFunctional, path, kernel: DiscreteKernel, route: str = "matrix") -> np.ndarray:
    """P for g = K^{-1}DF on one path or a stack; cells (matrix) or midpoints (quadrature)."""
    _check_route(route)
    grid = kernel.grid
    grad = eval_gradient(F, path.values if hasattr(path, "values") else path, grid)
    units = _p_units(F, kernel, route)
    return np.einsum("mk,...md->...kd", units, grad)


def _check_route(route: str) -> None:
    if route not in ROUTES:
        raise ConfigurationError(f"unknown route {route!r}; choose from {ROUTES}")


@lru_cache(maxsize=64)
def _p_units_cached(H: float, n: int, times: tuple, route: str) -> np.ndarray:
    from .grid import make_grid
    from .kernel import kernel_matrix

    grid = make_grid(n)
    if route == "matrix":
        kernel = kernel_matrix(H, grid)
        out = []
        for T in times:
            r = grid.index_of(T) - 1
            g = np.asarray(kernel.matrix[r, :])[:, None]
            out.append(p_from_gradient_matrix(g, kernel)[:, 0])
        return np.array(out)
    return np.array([p_unit_regularized(H, T, grid.midpoints) for T in times])


def _p_units(F: CylindricalFunctional, kernel: DiscreteKernel, route: str) -> np.ndarray:
    F.indices(kernel.grid)
    units = _p_units_cached(kernel.H, kernel.n, F.times, route)
    units.setflags(write=False)
    return units


# unit responses of Y = K^{-1}DF + ζ ---------------------------------------------------


def _correction_quadrature(P_mid: np.ndarray, alpha: float, kernel: DiscreteKernel) -> np.ndarray:
    """ζ at midpoints: ∫_t^1 K(s, t)(alpha² ∫_s^1 e^{-alpha(u-s)} P_u du - alpha P_s) ds.

    Inner integrals use the midpoint rule on cells, the outer one right
    nodes s = t_k, k > l, with the kernel evaluated pointwise.
    """
    grid = kernel.grid
    dt = grid.dt
    n = kernel.n
    mids = grid.midpoints
    nodes = grid.points
    # U(t_k) = ∫_{t_k}^1 e^{-alpha(u - t_k)} P_u du for k = 0..n
    U = np.zeros(n + 1)
    decay = np.exp(-alpha * dt)
    half = np.exp(-alpha * dt / 2)
    for k in range(n - 1, -1, -1):
        U[k] = decay * U[k + 1] + dt * half * P_mid[k]
    # P at right nodes: value of the cell that starts there (0 past the end)
    P_node = np.append(P_mid[1:], 0.0)
    w = alpha * alpha * U[1:] - alpha * P_node
    kmat = _pointwise_kernel(kernel.H, n)
    return dt * (w @ kmat)


@lru_cache(maxsize=16)
def _pointwise_kernel(H: float, n: int) -> np.ndarray:
    """K(t_k, mid_l) for k = 1..n (rows) and cells l (columns)."""
    nodes = np.arange(1, n + 1) / n
    mids = (np.arange(n) + 0.5) / n
    out = np.zeros((n, n))
    for k in range(n):
        out[k, : k + 1] = eval_kernel(H, nodes[k], mids[: k + 1])
    out.setflags(write=False)
    return out


def response_units(
    F: CylindricalFunctional, alpha: float, kernel: DiscreteKernel, route: str = "matrix"
) -> np.ndarray:
    """Rows U_i over cells so that Y_k = Σ_i U_i[k] ∇^i f (per coordinate)."""
    _check_route(route)
    P = _p_units(F, kernel, route)
    if route == "matrix":
        g = gradient_unit_responses(F, kernel)
        zeta = correction_matrix(P[:, :, None], alpha, kernel)[:, :, 0] if alpha else 0.0
        return g + zeta
    n = kernel.n
    kmat = _pointwise_kernel(kernel.H, n)
    rows = F.indices(kernel.grid) - 1
    g = np.asarray(kmat[rows, :])
    if not alpha:
        return g.copy()
    return g + np.array([_correction_quadrature(p, alpha, kernel) for p in P])


# conditional expectation ------------------------------------------------------------


def _features(x: np.ndarray, degree: int) -> np.ndarray:
    """[1, x, x², ..., x^degree] per coordinate of x (paths, dim)."""
    cols = [np.ones(x.shape[0])]
    for d in range(x.shape[1]):
        for p in range(1, degree + 1):
            cols.append(x[:, d] ** p)
    return np.column_stack(cols)


def regression_projection(
    targets: np.ndarray, state: np.ndarray, degree: int = 3
) -> np.ndarray:
    """Least-squares fit of ``targets`` (paths, q) on polynomial features of ``state``.

    Zero-variance features are dropped (the state at t = 0 is constant).
    """
    X = _features(state, degree)
    keep = np.ones(X.shape[1], dtype=bool)
    keep[1:] = np.ptp(X[:, 1:], axis=0) > 0
    X = X[:, keep]
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    coef, _, rank, _ = np.linalg.lstsq(Xs, targets, rcond=None)
    if rank < Xs.shape[1]:
        raise EstimatorError(
            f"regression design has rank {rank} < {Xs.shape[1]}; use more paths or a smaller basis"
        )
    return Xs @ coef


def _gradient_is_constant(grad: np.ndarray) -> bool:
    return bool(np.all(grad == grad[:1]))


def eta_integrand(
    F: CylindricalFunctional,
    params: ModelParams,
    kernel: DiscreteKernel,
    batch: PathBatch,
    estimator: str = "auto",
    route: str = "matrix",
    basis_degree: int = 3,
) -> np.ndarray:
    """η on cells for every path of ``batch``, shape (paths, n, dim).

    ``exact`` needs a path-independent gradient; ``regression`` projects the
    gradient coefficients at each time slice onto polynomials of X_{t_k}.
    """
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    grid = kernel.grid
    units = response_units(F, params.alpha, kernel, route)
    grad = eval_gradient(F, batch.fou, grid)  # (paths, m, dim)
    constant = _gradient_is_constant(grad)
    if estimator == "auto":
        estimator = "exact" if constant else "regression"
    n_paths, m, dim = grad.shape
    if estimator == "exact":
        if not constant:
            raise EstimatorError(f"{F.label}: gradient is path dependent; the exact estimator does not apply")
        eta = np.einsum("mk,md->kd", units, grad[0])
        return np.broadcast_to(eta, (n_paths,) + eta.shape)
    if basis_degree < 1:
        raise ConfigurationError("basis degree must be >= 1")
    idx = F.indices(grid)
    eta = np.zeros((n_paths, kernel.n, dim))
    flat = grad.reshape(n_paths, m * dim)
    for k in range(kernel.n):
        live = idx > k
        if not live.any():
            break
        fitted = regression_projection(flat, batch.fou[:, k, :], basis_degree).reshape(n_paths, m, dim)
        eta[:, k, :] = np.einsum("m,pmd->pd", units[:, k], fitted)
    return eta


@dataclass(frozen=True)
class RepresentationReport:
    e_f: float
    residual_var_ratio: float
    var_f: float
    n_paths: int
    estimator: str
    route: str


def representation_check(
    F: CylindricalFunctional,
    params: ModelParams,
    kernel: DiscreteKernel,
    n_paths: int,
    rng: RngSpec,
    estimator: str = "auto",
    route: str = "matrix",
    basis_degree: int = 3,
) -> RepresentationReport:
    """Var(F - Ê[F] - Σ<η_k, ΔB_k>) / Var F on one simulated batch."""
    batch = simulate_batch_arrays(params, kernel, n_paths, rng)
    fx = np.asarray(eval_functional(F, batch.fou, kernel.grid), dtype=float)
    var_f = float(np.var(fx, ddof=1))
    if not var_f > 0:
        raise DegenerateFunctionalError(f"{F.label} has zero variance on the sample")
    grad = eval_gradient(F, batch.fou, kernel.grid)
    used = estimator if estimator != "auto" else ("exact" if _gradient_is_constant(grad) else "regression")
    eta = eta_integrand(F, params, kernel, batch, used, route, basis_degree)
    stoch = np.sum(eta * batch.increments, axis=(-2, -1))
    resid = fx - fx.mean() - stoch
    return RepresentationReport(
        float(fx.mean()), float(np.var(resid, ddof=1) / var_f), var_f, n_paths, used, route
    )


# adjoint identity ----------------------------------------------------------------


def pairing_direct(P, delta, dt: float) -> np.ndarray:
    """Σ_k <P_k, δ_k> dt."""
    return np.sum(np.asarray(P) * np.asarray(delta), axis=(-2, -1)) * dt


def pairing_reordered(P, j, alpha: float, kernel: DiscreteKernel) -> float:
    """The same pairing summed in the order ∫ <∫_t^1 K(s,t)(...) ds, j_t> dt.

    Literal loops over (t, s, u) cells; independent of ``correction_matrix``.
    """
    P = np.asarray(P, dtype=float)
    j = np.asarray(j, dtype=float)
    M = kernel.matrix
    dt = kernel.grid.dt
    rho = 1.0 - alpha * dt
    n = kernel.n
    total = 0.0
    for q in range(n):
        acc = np.zeros(P.shape[-1])
        for s in range(q + 1, n):
            inner = np.zeros(P.shape[-1])
            for u in range(s + 1, n):
                inner += dt * rho ** (u - 1 - s) * P[u]
            acc += dt * M[s - 1, q] * (alpha * alpha * inner - alpha * P[s])
        total += float(acc @ j[q]) * dt
    return total
