"""Cylindrical functionals F(ω) = f(ω_{t_1}, ..., ω_{t_m}) and their derivatives.

``f`` and ``grad`` act on arrays of shape (..., m, dim) so that the same
functional evaluates a single path or a stacked batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AlignmentError, ConfigurationError, DimensionError
from .fracops import CMElement, apply_K
from .grid import TimeGrid, VecPath
from .kernel import DiscreteKernel

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CylindricalFunctional:
    times: tuple[float, ...]
    f: Fn
    grad: Fn
    label: str
    dim: int = 1

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        if not ts or any(not 0 < t <= 1 for t in ts) or list(ts) != sorted(ts):
            raise ConfigurationError(f"times must be sorted in (0, 1], got {ts}")
        object.__setattr__(self, "times", ts)

    def indices(self, grid: TimeGrid) -> np.ndarray:
        idx = [grid.index_of(t) for t in self.times]
        if any(i is None for i in idx):
            raise AlignmentError(f"{self.label}: times {self.times} not all on the {grid.n_steps}-step grid")
        return np.asarray(idx)

    def values_at(self, paths: np.ndarray, grid: TimeGrid) -> np.ndarray:
        paths = np.asarray(paths, dtype=float)
        if paths.shape[-2] != grid.n_steps + 1:
            raise DimensionError("path length does not match grid")
        if paths.shape[-1] != self.dim:
            raise DimensionError(f"{self.label} expects dim {self.dim}, got {paths.shape[-1]}")
        return paths[..., self.indices(grid), :]


def _as_array(path) -> tuple[np.ndarray, TimeGrid | None]:
    if isinstance(path, VecPath):
        return path.values, path.grid
    return np.asarray(path, dtype=float), None


def eval_functional(F: CylindricalFunctional, path, grid: TimeGrid | None = None):
    """F on a VecPath, or on raw arrays (..., n+1, dim) when ``grid`` is given."""
    values, g = _as_array(path)
    grid = grid or g
    out = F.f(F.values_at(values, grid))
    return float(out) if np.ndim(out) == 0 else out


def eval_gradient(F: CylindricalFunctional, path, grid: TimeGrid | None = None) -> np.ndarray:
    """∇^i f at the path values, shape (..., m, dim)."""
    values, g = _as_array(path)
    grid = grid or g
    return F.grad(F.values_at(values, grid))


def _kh(h, kernel: DiscreteKernel) -> np.ndarray:
    if isinstance(h, CMElement):
        if h.kh_values is not None:
            return h.kh_values
        h = h.h_values
    return apply_K(kernel, h)


def directional_derivative(F: CylindricalFunctional, path, h, kernel: DiscreteKernel):
    """D_h F = Σ_i <∇^i f, (Kh)_{t_i}>.  ``h`` is a CMElement or per-cell array."""
    values, g = _as_array(path)
    grid = g or kernel.grid
    if grid.n_steps != kernel.n:
        raise AlignmentError("path and kernel grids differ")
    grad = eval_gradient(F, values, grid)
    kh = _kh(h, kernel)[..., F.indices(grid), :]
    out = np.sum(grad * kh, axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def finite_difference_derivative(
    F: CylindricalFunctional, path, h, kernel: DiscreteKernel, delta: float = 1e-5, scheme: str = "central"
):
    """Difference quotient of ε -> F(ω + ε Kh) at ε = 0.

    ``central`` is (F(ω + δKh) - F(ω - δKh)) / 2δ, ``forward`` is
    (F(ω + δKh) - F(ω)) / δ.  The forward error δ f''/2 does not shrink
    with f' near critical points, so relative checks use ``central``.
    """
    values, g = _as_array(path)
    grid = g or kernel.grid
    kh = _kh(h, kernel)
    up = eval_functional(F, values + delta * kh, grid)
    if scheme == "forward":
        return (up - eval_functional(F, values, grid)) / delta
    if scheme == "central":
        return (up - eval_functional(F, values - delta * kh, grid)) / (2.0 * delta)
    raise ConfigurationError(f"unknown difference scheme {scheme!r}")


def gradient_unit_responses(F: CylindricalFunctional, kernel: DiscreteKernel) -> np.ndarray:
    """Rows M[idx(t_i) - 1, :] masked to cells before t_i, shape (m, n).

    (K^{-1}DF)_j = Σ_i R[i, j] ∇^i f.
    """
    rows = F.indices(kernel.grid) - 1
    return np.asarray(kernel.matrix[rows, :])


def k_inv_gradient(F: CylindricalFunctional, path, kernel: DiscreteKernel) -> np.ndarray:
    """Per-cell integrand (K^{-1}DF)_s, shape (..., n, dim).

    It satisfies <k_inv_gradient(F), h> = D_h F for every per-cell h.
    """
    values, g = _as_array(path)
    grid = g or kernel.grid
    if grid.n_steps != kernel.n:
        raise AlignmentError("path and kernel grids differ")
    grad = eval_gradient(F, values, grid)
    R = gradient_unit_responses(F, kernel)
    return np.einsum("mj,...md->...jd", R, grad)


def square(F: CylindricalFunctional, shift: float = 0.0) -> CylindricalFunctional:
    """F² + shift with gradient 2 F ∇f."""
    return CylindricalFunctional(
        F.times,
        lambda x: F.f(x) ** 2 + shift,
        lambda x: 2.0 * np.asarray(F.f(x))[..., None, None] * F.grad(x),
        f"({F.label})^2" if shift == 0 else f"({F.label})^2+{shift:g}",
        F.dim,
    )


def constant(c: float = 1.0, dim: int = 1) -> CylindricalFunctional:
    return CylindricalFunctional(
        (1.0,),
        lambda x: np.full(x.shape[:-2], float(c)),
        lambda x: np.zeros_like(x),
        "constant",
        dim,
    )


def linear(a=None, dim: int = 1, t: float = 1.0) -> CylindricalFunctional:
    """<a, ω_t>; default a = (1, ..., 1)."""
    a = np.ones(dim) if a is None else np.asarray(a, dtype=float)
    if a.shape != (dim,):
        raise DimensionError("coefficient vector must have length dim")
    return CylindricalFunctional(
        (t,),
        lambda x: x[..., 0, :] @ a,
        lambda x: np.broadcast_to(a, x.shape).copy(),
        "linear",
        dim,
    )


def quadratic(times=(0.5, 1.0), dim: int = 1) -> CylindricalFunctional:
    """Σ_i |ω_{t_i}|²."""
    return CylindricalFunctional(
        tuple(times), lambda x: np.sum(x * x, axis=(-2, -1)), lambda x: 2.0 * x, "quadratic", dim
    )


def gauss_bump(dim: int = 1, t: float = 1.0) -> CylindricalFunctional:
    """exp(-|ω_t|²); bounded with bounded gradient."""

    def f(x):
        return np.exp(-np.sum(x[..., 0, :] ** 2, axis=-1))

    return CylindricalFunctional((t,), f, lambda x: -2.0 * x * f(x)[..., None, None], "gauss_bump", dim)


def product(t1: float = 0.5, t2: float = 1.0, dim: int = 1) -> CylindricalFunctional:
    """<ω_{t1}, ω_{t2}>."""
    return CylindricalFunctional(
        (t1, t2),
        lambda x: np.sum(x[..., 0, :] * x[..., 1, :], axis=-1),
        lambda x: x[..., ::-1, :].copy(),
        "product",
        dim,
    )


LIBRARY = {
    "linear": linear,
    "quadratic": lambda dim=1: quadratic(dim=dim),
    "gauss_bump": gauss_bump,
    "product": product,
}
SHIPPED = ("linear", "quadratic", "gauss_bump", "product")


def functional_by_label(label: str, dim: int = 1) -> CylindricalFunctional:
    if label == "constant":
        return constant(dim=dim)
    try:
        return LIBRARY[label](dim=dim)
    except KeyError:
        raise ConfigurationError(f"unknown functional {label!r}; choose from {sorted(LIBRARY)}") from None
