"""The operator (Kh)_t = ∫_0^t K(t, s) h_s ds and two inverses.

Per-cell integrands have shape (..., n, dim); path values (..., n + 1, dim)
with the zero initial value in row 0.  Leading axes are batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DerivativeEstimationError, DimensionError, SingularKernelError
from .grid import TimeGrid
from .kernel import DiscreteKernel, check_hurst, gamma, inverse_normalization
from .quadrature import composite_rule


@dataclass(frozen=True)
class CMElement:
    """An integrand h on the grid; K h is the Cameron-Martin direction."""

    grid: TimeGrid
    h_values: np.ndarray
    kh_values: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.h_values.shape[-1]


def _check_cells(kernel: DiscreteKernel, h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim < 2 or h.shape[-2] != kernel.n:
        raise DimensionError(f"integrand must be (..., {kernel.n}, dim), got {h.shape}")
    return h


def apply_K(kernel: DiscreteKernel, h) -> np.ndarray:
    """Path values of Kh; row 0 is zero and row i is Σ_{j<i} M[i-1, j] h_j dt."""
    h = _check_cells(kernel, h)
    out = np.zeros(h.shape[:-2] + (kernel.n + 1, h.shape[-1]))
    out[..., 1:, :] = (kernel.matrix @ h) * kernel.grid.dt
    return out


def _move_cells_first(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    # (..., n, d) -> (n, prod(...) * d) for LAPACK triangular solves
    lead = x.shape[:-2]
    y = np.moveaxis(x, -2, 0).reshape(x.shape[-2], -1)
    return y, lead


def _restore(y: np.ndarray, lead: tuple, n: int, d: int) -> np.ndarray:
    return np.moveaxis(y.reshape((n,) + lead + (d,)), 0, -2)


def _check_diagonal(kernel: DiscreteKernel) -> None:
    diag = np.diag(kernel.matrix)
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise SingularKernelError(f"non-positive diagonal cell at index {bad[0]}")


def apply_K_inverse_matrix(kernel: DiscreteKernel, g) -> np.ndarray:
    """Per-cell h with apply_K(kernel, h) == g, by forward substitution."""
    g = np.asarray(g, dtype=float)
    if g.ndim < 2 or g.shape[-2] != kernel.n + 1:
        raise DimensionError(f"path must be (..., {kernel.n + 1}, dim), got {g.shape}")
    _check_diagonal(kernel)
    rhs, lead = _move_cells_first(g[..., 1:, :])
    sol = solve_triangular(kernel.matrix * kernel.grid.dt, rhs, lower=True, check_finite=False)
    return _restore(sol, lead, kernel.n, g.shape[-1])


def apply_K_adjoint_inverse(kernel: DiscreteKernel, g) -> np.ndarray:
    """Solve M^T x = g for per-cell g (the adjoint of the inverse, dt-weighted)."""
    g = _check_cells(kernel, g)
    _check_diagonal(kernel)
    rhs, lead = _move_cells_first(g)
    sol = solve_triangular(kernel.matrix, rhs, lower=True, trans="T", check_finite=False)
    return _restore(sol, lead, kernel.n, g.shape[-1])


def inner_product(h, g, dt: float) -> np.ndarray | float:
    """∫_0^1 <h_t, g_t> dt on the grid; reduces the last two axes."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    if h.shape != g.shape:
        raise DimensionError(f"shape mismatch {h.shape} vs {g.shape}")
    r = np.sum(h * g, axis=(-2, -1)) * dt
    return float(r) if np.ndim(r) == 0 else r


def numerical_derivative(grid: TimeGrid, g: np.ndarray) -> np.ndarray:
    """Node derivative: central differences inside, one-sided at both ends."""
    if not np.all(np.isfinite(g)):
        raise DerivativeEstimationError("path contains non-finite values")
    return np.gradient(g, grid.dt, axis=0, edge_order=2)


def _psi_from_values(H: float, grid: TimeGrid, g: np.ndarray) -> np.ndarray:
    """Node values of t^(1/2-H) g'(t) for g = K h with smooth h.

    Such g behave like t^(H+1/2) phi(t) with phi smooth, so phi is
    differenced instead of g: t^(1/2-H) g' = (H+1/2) phi + t phi'.
    """
    t = grid.points
    phi = np.empty_like(g)
    phi[1:] = g[1:] / t[1:, None] ** (H + 0.5)
    # quadratic extrapolation to t = 0
    phi[0] = 3 * phi[1] - 3 * phi[2] + phi[3]
    dphi = numerical_derivative(grid, phi)
    return (H + 0.5) * phi + t[:, None] * dphi


def volterra_marchaud(
    H: float,
    t: np.ndarray,
    psi,
    n_panels: int,
    order: int = 4,
) -> np.ndarray:
    """∫_0^t (psi(t) - psi(u)) / (t - u)^(1/2+H) du for each t (psi vectorized)."""
    a = H + 0.5
    u, w = composite_rule(np.zeros_like(t), t, n_panels, order, right_exp=0.5 - H)
    pt = psi(t)
    pu = psi(u.reshape(-1)).reshape(u.shape + pt.shape[1:])
    diff = pt[:, None] - pu
    scale = (t[:, None] - u) ** (-a)
    scale = scale.reshape(scale.shape + (1,) * (diff.ndim - 2))
    return np.sum(w.reshape(scale.shape) * diff * scale, axis=1)


def apply_K_inverse_marchaud(
    H: float,
    grid: TimeGrid,
    g,
    derivative=None,
    at=None,
    n_panels: int | None = None,
) -> np.ndarray:
    """K^{-1} g through the Marchaud form of the fractional derivative.

    (K^{-1}g)_t = t^(H-1/2) D^(H-1/2) [s^(1/2-H) g'] / (c_H Γ(H-1/2)), with

    D^γ ψ(t) = (ψ(t) t^(-γ) + γ ∫_0^t (ψ(t) - ψ(u)) / (t-u)^(1+γ) du) / Γ(1-γ).

    ``g`` holds node values (n + 1, dim).  The derivative comes from
    ``derivative`` (node values or a callable) or from finite differences;
    ψ = u^(1/2-H) g' is interpolated linearly between nodes.  Evaluated at
    ``at`` (default: cell midpoints).
    """
    H = check_hurst(H)
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != grid.n_steps + 1:
        raise DimensionError(f"path must be (n+1, dim), got {g.shape}")
    t = grid.midpoints if at is None else np.asarray(at, dtype=float)
    gam = H - 0.5
    nodes = grid.points

    if callable(derivative):
        def psi(x):
            x = np.asarray(x, dtype=float)
            return np.where(x[..., None] > 0, x[..., None], 1.0) ** (-gam) * derivative(x)
    else:
        if derivative is None:
            psi_nodes = _psi_from_values(H, grid, g)
        else:
            dg = np.asarray(derivative, dtype=float)
            if not np.all(np.isfinite(dg)):
                raise DerivativeEstimationError("non-finite derivative estimate")
            psi_nodes = np.empty_like(dg)
            psi_nodes[1:] = nodes[1:, None] ** (-gam) * dg[1:]
            psi_nodes[0] = 2 * psi_nodes[1] - psi_nodes[2]

        def psi(x):
            x = np.asarray(x, dtype=float)
            return np.stack(
                [np.interp(x, nodes, psi_nodes[:, k]) for k in range(psi_nodes.shape[1])],
                axis=-1,
            )

    if n_panels is None:
        n_panels = grid.n_steps
    integral = volterra_marchaud(H, t, psi, n_panels)
    tc = t[:, None]
    out = (psi(t) + gam * tc**gam * integral) / gamma(1.5 - H)
    return out / inverse_normalization(H)
