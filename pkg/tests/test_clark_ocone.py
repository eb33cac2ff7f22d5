from __future__ import annotations

import numpy as np
import pytest

from fracou.clark_ocone import (
    correction_matrix,
    delta_term,
    eta_integrand,
    map_j_to_h,
    p_from_gradient_matrix,
    p_term,
    p_unit_regularized,
    pairing_direct,
    pairing_reordered,
    regression_projection,
    representation_check,
    response_units,
)
from fracou.errors import ConfigurationError, DegenerateFunctionalError, EstimatorError
from fracou.girsanov import j_from_h
from fracou.grid import RngSpec, make_grid
from fracou.kernel import kernel_matrix
from fracou.malliavin import constant, functional_by_label, k_inv_gradient, linear, quadratic
from fracou.simulate import ModelParams, simulate_batch_arrays

GRID = make_grid(64)
KERNEL = kernel_matrix(0.75, GRID)
RNG = np.random.default_rng(17)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_h_to_j_round_trip(alpha):
    h = RNG.standard_normal((64, 2))
    assert np.allclose(map_j_to_h(j_from_h(h, alpha, KERNEL), alpha, KERNEL), h, atol=1e-8)


def test_alpha_zero_maps_are_identity():
    j = RNG.standard_normal((64, 1))
    assert np.allclose(map_j_to_h(j, 0.0, KERNEL), j, atol=1e-10)
    assert np.all(correction_matrix(RNG.standard_normal((64, 1)), 0.0, KERNEL) == 0)
    assert np.all(delta_term(j, 0.0, KERNEL) == 0)


def test_alpha_zero_linear_eta_is_kernel_row():
    p = ModelParams(0.75, 0.0, test_mode=True)
    batch = simulate_batch_arrays(p, KERNEL, 3, RngSpec(0))
    eta = eta_integrand(linear(), p, KERNEL, batch, "exact", "quadrature")[0, :, 0]
    from fracou.kernel import eval_kernel

    assert np.allclose(eta, eval_kernel(0.75, 1.0, GRID.midpoints), rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 0.7, 2.0])
def test_correction_is_adjoint_of_delta(alpha):
    P = RNG.standard_normal((64, 1))
    j = RNG.standard_normal((64, 1))
    lhs = pairing_direct(P, delta_term(j, alpha, KERNEL), GRID.dt)
    rhs = np.sum(correction_matrix(P, alpha, KERNEL) * j) * GRID.dt
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_reordered_pairing_small_grid():
    k = kernel_matrix(0.7, make_grid(16))
    P = RNG.standard_normal((16, 1))
    j = RNG.standard_normal((16, 1))
    a = pairing_direct(P, delta_term(j, 1.3, k), k.grid.dt)
    b = pairing_reordered(P, j, 1.3, k)
    assert b == pytest.approx(a, rel=1e-10)


def test_p_satisfies_adjoint_relation():
    # Σ_k P_k (Kj)_{k} dt-increments: Σ_k <P_k, Δ(Kj)_k> = <g, j> dt-weighted
    g = RNG.standard_normal((64, 1))
    j = RNG.standard_normal((64, 1))
    P = p_from_gradient_matrix(g, KERNEL)
    kj = (KERNEL.matrix @ j) * GRID.dt
    dkj = np.diff(np.vstack([[0.0], kj[:, :1]]), axis=0)
    assert np.sum(P * dkj) == pytest.approx(np.sum(g * j) * GRID.dt, rel=1e-10)


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_regularized_p_unit(H):
    t = np.array([1e-3, 0.01, 0.2, 0.5, 0.9, 0.999])
    assert np.allclose(p_unit_regularized(H, 1.0, t), 1.0, atol=1e-7)
    assert np.all(p_unit_regularized(H, 0.5, np.array([0.6, 0.9])) == 0)


def test_routes_agree_on_linear_p():
    x = np.zeros((65, 1))
    a = p_term(linear(), x, KERNEL, "matrix")
    b = p_term(linear(), x, KERNEL, "quadrature")
    assert np.max(np.abs(a - b)) < 0.05
    with pytest.raises(ConfigurationError):
        p_term(linear(), x, KERNEL, "spectral")


def test_alpha_zero_units_are_gradient():
    F = quadratic()
    x = np.zeros((1, 65, 1))
    u = response_units(F, 0.0, KERNEL, "matrix")
    grad = np.ones((1, 2, 1))
    assert np.allclose(np.einsum("mk,pmd->pkd", u, grad), k_inv_gradient(linear(t=0.5), x, KERNEL) + k_inv_gradient(linear(), x, KERNEL))


def test_exact_representation_at_alpha_zero():
    p = ModelParams(0.75, 0.0, test_mode=True)
    rep = representation_check(linear(), p, KERNEL, 500, RngSpec(1), route="matrix")
    assert rep.estimator == "exact"
    assert rep.residual_var_ratio < 1e-20


def test_ito_isometry_for_linear():
    p = ModelParams(0.75, 1.0)
    batch = simulate_batch_arrays(p, KERNEL, 20000, RngSpec(5))
    eta = eta_integrand(linear(), p, KERNEL, batch, "exact", "matrix")[0]
    var = np.var(batch.fou[:, -1, 0], ddof=1)
    assert np.sum(eta**2) * GRID.dt == pytest.approx(var, rel=0.03)


def test_martingale_increments_uncorrelated_with_past():
    p = ModelParams(0.75, 1.0)
    batch = simulate_batch_arrays(p, KERNEL, 20000, RngSpec(6))
    eta = eta_integrand(quadratic(), p, KERNEL, batch, "regression", "matrix")
    incr = np.sum(eta * batch.increments, axis=-1)
    # lag-1 correlation of the martingale increments, pooled over time
    c = np.corrcoef(incr[:, 1:-1].ravel(), incr[:, 2:].ravel())[0, 1]
    assert abs(c) < 0.02


def test_regression_representation_is_good():
    p = ModelParams(0.75, 1.0)
    rep = representation_check(quadratic(), p, KERNEL, 5000, RngSpec(2))
    assert rep.estimator == "regression"
    assert rep.residual_var_ratio < 0.1


def test_estimator_errors():
    p = ModelParams(0.75, 1.0)
    batch = simulate_batch_arrays(p, KERNEL, 200, RngSpec(3))
    with pytest.raises(EstimatorError):
        eta_integrand(quadratic(), p, KERNEL, batch, "exact")
    with pytest.raises(ConfigurationError):
        eta_integrand(quadratic(), p, KERNEL, batch, "oracle")
    with pytest.raises(DegenerateFunctionalError):
        representation_check(constant(), p, KERNEL, 200, RngSpec(3))


def test_constant_functional_has_zero_eta():
    p = ModelParams(0.75, 1.0)
    batch = simulate_batch_arrays(p, KERNEL, 10, RngSpec(3))
    assert np.all(eta_integrand(constant(), p, KERNEL, batch) == 0)


def test_regression_projection():
    x = RNG.standard_normal((500, 1))
    y = np.column_stack([1 + 2 * x[:, 0] - x[:, 0] ** 3, x[:, 0] ** 2])
    assert np.allclose(regression_projection(y, x, 3), y, atol=1e-9)
    # a constant state leaves only the intercept
    assert np.allclose(regression_projection(y, np.zeros((500, 1)), 3), y.mean(axis=0))
    with pytest.raises(EstimatorError):
        regression_projection(y, np.repeat([[0.0], [1.0]], 250, axis=0), 3)
