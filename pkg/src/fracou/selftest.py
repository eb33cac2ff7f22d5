"""Cheap exact invariants of every module, run by ``fracou selftest``."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import clark_ocone as co
from . import girsanov as gi
from .errors import InvalidGridError
from .fracops import apply_K, apply_K_inverse_matrix, inner_product
from .grid import RngSpec, make_grid
from .kernel import c_H, eval_kernel, fbm_covariance, kernel_matrix
from .lsi import lsi_constants, plugin_entropy
from .malliavin import constant, directional_derivative, eval_functional, linear, product
from .simulate import ModelParams, simulate_bundle


def _grid_points():
    return np.allclose(make_grid(4).points, [0, 0.25, 0.5, 0.75, 1.0])


def _grid_rejects_one():
    try:
        make_grid(1)
    except InvalidGridError:
        return True
    return False


def _causal_kernel():
    return eval_kernel(0.75, 0.5, 0.5) == 0 and eval_kernel(0.75, 0.5, 0.7) == 0 and eval_kernel(0.75, 1, 0.5) > 0


def _covariance_special_case():
    return abs(fbm_covariance(0.75, 0.5, 0.25) - 0.5 * 0.5**1.5) < 1e-15


def _operator_identities():
    k = kernel_matrix(0.75, make_grid(32))
    rng = np.random.default_rng(0)
    h1, h2 = rng.normal(size=(2, 32, 1))
    lin = np.array_equal(apply_K(k, h1 + h2), apply_K(k, h1) + apply_K(k, h2)) or np.allclose(
        apply_K(k, h1 + h2), apply_K(k, h1) + apply_K(k, h2), rtol=1e-15, atol=1e-15
    )
    zero = not np.any(apply_K(k, np.zeros((32, 1))))
    rt = np.abs(apply_K_inverse_matrix(k, apply_K(k, h1)) - h1).max() <= 1e-10 * np.abs(h1).max()
    ones = abs(inner_product(np.ones((32, 1)), np.ones((32, 1)), k.grid.dt) - 1.0) < 1e-14
    return lin and zero and rt and ones


def _alpha_zero_paths():
    k = kernel_matrix(0.75, make_grid(32))
    b = simulate_bundle(ModelParams(0.75, 0.0, test_mode=True), k, RngSpec(1))
    return np.array_equal(b.fou.values, b.fbm.values)


def _functional_examples():
    grid = make_grid(4)
    path = np.zeros((5, 1))
    path[2, 0], path[4, 0] = 0.7, 0.3
    k = kernel_matrix(0.75, grid)
    return (
        eval_functional(linear(), path, grid) == 0.3
        and eval_functional(constant(2.5), path, grid) == 2.5
        and eval_functional(product(), path, grid) == 0.7 * 0.3
        and directional_derivative(product(), path, np.zeros((4, 1)), k) == 0
    )


def _drift_reductions():
    k = kernel_matrix(0.75, make_grid(32))
    h = np.random.default_rng(2).normal(size=(32, 1))
    zero = not np.any(gi.pullback_drift(np.zeros((32, 1)), 1.0, k).beta)
    j0 = np.abs(gi.j_from_h(h, 0.0, k) - h).max() < 1e-10
    rho = gi.girsanov_density(h, np.ones((32, 1)), 0.0, k.grid.dt).rho
    return zero and j0 and np.all(rho == 1.0)


def _representation_reductions():
    k = kernel_matrix(0.75, make_grid(32))
    j = np.random.default_rng(3).normal(size=(32, 1))
    same = np.abs(co.map_j_to_h(j, 0.0, k) - j).max() < 1e-10
    path = np.zeros((33, 1))
    P0 = not np.any(co.p_term(constant(), path, k))
    return same and P0


def _lsi_identities():
    g = np.random.default_rng(4).uniform(0.1, 2.0, 100)
    return (
        lsi_constants(0.75, 0.0, 1.0, -1.0).lsi_factor == 4.0
        and plugin_entropy(np.full(10, 3.0)) == 0.0
        and abs(plugin_entropy(2.5 * g) - 2.5 * plugin_entropy(g)) < 1e-12
        and c_H(0.75) > 0
    )


CHECKS: dict[str, Callable[[], bool]] = {
    "grid_points": _grid_points,
    "grid_rejects_one_step": _grid_rejects_one,
    "kernel_causal_positive": _causal_kernel,
    "covariance_special_case": _covariance_special_case,
    "operator_identities": _operator_identities,
    "alpha_zero_fou_is_fbm": _alpha_zero_paths,
    "functional_examples": _functional_examples,
    "drift_reductions": _drift_reductions,
    "representation_reductions": _representation_reductions,
    "lsi_identities": _lsi_identities,
}


def run_selftest() -> dict[str, bool]:
    return {name: bool(fn()) for name, fn in CHECKS.items()}
