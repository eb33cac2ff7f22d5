from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracou.errors import ConfigurationError
from fracou.grid import RngSpec, make_grid
from fracou.kernel import kernel_matrix
from fracou.lsi import (
    entropy_identity_check,
    entropy_mc,
    gradient_energy,
    intermediate_bounds,
    lsi_check,
    lsi_check_many,
    lsi_constants,
    plugin_entropy,
)
from fracou.malliavin import SHIPPED, constant, functional_by_label, k_inv_gradient, linear
from fracou.simulate import ModelParams, simulate_batch_arrays

GRID = make_grid(64)
KERNEL = kernel_matrix(0.75, GRID)
C2_075 = -0.61114766082408365357


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_alpha_zero_factor_is_four(H):
    assert lsi_constants(H, 0.0).lsi_factor == 4.0


def test_constants_oracle():
    # 30-digit mpmath evaluation of the same closed forms
    c = lsi_constants(0.75, 1.0, C1=0.8, C2=C2_075)
    assert c.C == pytest.approx(6.6904497124782436166, rel=1e-9)
    assert c.C_hat == pytest.approx(7.6857062843811095663, rel=1e-9)
    assert c.lsi_factor == pytest.approx(2151.8742945756181363, rel=1e-9)


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_factor_increases_with_alpha(H):
    f = [lsi_constants(H, a).lsi_factor for a in (0.0, 0.25, 0.5, 1.0, 2.0)]
    assert all(b > a for a, b in zip(f, f[1:]))


def test_constants_validation():
    with pytest.raises(ConfigurationError):
        lsi_constants(0.75, -0.1)
    d = lsi_constants(0.75, 0.5).as_dict()
    assert set(d) == {"H", "alpha", "C1", "C2", "c_H", "C", "C_hat", "lsi_factor"}


def test_plugin_entropy():
    assert plugin_entropy(np.full(10, 3.0)) == pytest.approx(0.0, abs=1e-14)
    G = np.array([0.0, 1.0, 2.0, 3.0])
    m = G.mean()
    expected = np.mean([0, 0, 2 * np.log(2), 3 * np.log(3)]) - m * np.log(m)
    assert plugin_entropy(G) == pytest.approx(expected)
    assert plugin_entropy(G) >= 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 50.0), min_size=2, max_size=40), st.floats(0.01, 100.0))
def test_entropy_homogeneous_and_nonnegative(values, c):
    G = np.array(values)
    e = plugin_entropy(G)
    assert e >= -1e-9 * max(1.0, G.max())
    assert plugin_entropy(c * G) == pytest.approx(c * e, rel=1e-7, abs=1e-9)


def test_entropy_mc_stable_across_seeds():
    p = ModelParams(0.75, 1.0)
    F = linear()
    a = entropy_mc(F, p, KERNEL, 20000, RngSpec(1))
    b = entropy_mc(F, p, KERNEL, 20000, RngSpec(2))
    assert abs(a.entropy - b.entropy) < 4 * np.hypot(a.se, b.se)


def test_gradient_energy_matches_k_inverse_gradient():
    p = ModelParams(0.75, 1.0)
    b = simulate_batch_arrays(p, KERNEL, 5, RngSpec(0))
    F = functional_by_label("product")
    g = k_inv_gradient(F, b.fou, KERNEL)
    assert np.allclose(gradient_energy(F, b.fou, KERNEL), np.sum(g * g, axis=(-2, -1)) * GRID.dt)


def test_lsi_small_sample():
    p = ModelParams(0.6, 0.5)
    k = kernel_matrix(0.6, GRID)
    reps = lsi_check_many([functional_by_label(lab) for lab in SHIPPED], p, k, 2000, RngSpec(4))
    assert all(r.passed() for r in reps)
    single = lsi_check(functional_by_label("quadratic"), p, k, 2000, RngSpec(4))
    assert single == reps[1]


def test_constant_functional_has_zero_entropy():
    p = ModelParams(0.75, 1.0)
    rep = lsi_check(constant(2.0), p, KERNEL, 200, RngSpec(4))
    assert rep.entropy == pytest.approx(0.0, abs=1e-12)
    assert rep.energy == 0.0 and rep.se == 0.0 and rep.passed()


def test_brownian_lsi_sharp_for_exponential_scale():
    # α = 0: Ent(F²) ≤ 4 E|DF|²/... holds with the factor 4 even for exp-type F
    p = ModelParams(0.75, 0.0, test_mode=True)
    rep = lsi_check(functional_by_label("gauss_bump"), p, KERNEL, 5000, RngSpec(7))
    assert rep.lsi_factor == 4.0 and rep.passed()


def test_linear_alpha_zero_has_clear_margin():
    p = ModelParams(0.75, 0.0, test_mode=True)
    rep = lsi_check(linear(), p, KERNEL, 20000, RngSpec(11))
    assert rep.margin >= 5 * rep.se


def test_intermediate_bounds_hold():
    p = ModelParams(0.9, 1.0)
    k = kernel_matrix(0.9, GRID)
    for lab in SHIPPED:
        ib = intermediate_bounds(functional_by_label(lab), p, k, 20, RngSpec(9))
        assert ib.holds


def test_entropy_identity():
    p = ModelParams(0.75, 1.0)
    rep = entropy_identity_check(linear(), p, KERNEL, 20000, RngSpec(10))
    assert abs(rep.z_score) < 4
