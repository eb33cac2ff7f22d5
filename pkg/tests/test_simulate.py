from __future__ import annotations

import io

import numpy as np
import pytest

from fracou.errors import ConfigurationError, DimensionError
from fracou.grid import RngSpec, make_grid
from fracou.kernel import kernel_matrix
from fracou.simulate import (
    ModelParams,
    fou_from_fbm,
    iter_batches,
    map_batches,
    set_threads,
    simulate_batch,
    simulate_batch_arrays,
    simulate_bundle,
    write_paths_csv,
)


def _setup(H=0.75, alpha=1.0, n=64, dim=1):
    k = kernel_matrix(H, make_grid(n))
    return ModelParams(H, alpha, dim, test_mode=alpha == 0), k


def test_params_validation():
    with pytest.raises(ConfigurationError):
        ModelParams(0.75, 0.0)
    with pytest.raises(ConfigurationError):
        ModelParams(0.75, -1.0)
    with pytest.raises(DimensionError):
        ModelParams(0.75, 1.0, dim=0)
    ModelParams(0.75, 0.0, test_mode=True)


def test_alpha_zero_is_fbm_exactly():
    p, k = _setup(alpha=0.0)
    b = simulate_batch_arrays(p, k, 20, RngSpec(5))
    assert np.array_equal(b.fou, b.fbm)


def test_all_paths_start_at_zero():
    p, k = _setup(dim=2)
    b = simulate_batch_arrays(p, k, 10, RngSpec(5))
    for arr in (b.bm, b.fbm, b.fou):
        assert np.all(arr[:, 0] == 0)
        assert arr.shape == (10, 65, 2)


def test_euler_recursion():
    fbm = np.random.default_rng(0).standard_normal((33, 1)).cumsum(axis=0)
    fbm[0] = 0
    x = fou_from_fbm(fbm, 2.0, 1 / 32)
    for i in range(32):
        assert x[i + 1, 0] == pytest.approx(x[i, 0] - 2.0 * x[i, 0] / 32 + fbm[i + 1, 0] - fbm[i, 0], abs=1e-12)


def test_schemes_agree_to_first_order():
    p, k = _setup(n=256)
    b = simulate_batch_arrays(p, k, 50, RngSpec(2))
    y = fou_from_fbm(b.fbm, 1.0, k.grid.dt, "exponential")
    assert np.max(np.abs(y - b.fou)) < 0.05
    with pytest.raises(ConfigurationError):
        fou_from_fbm(b.fbm, 1.0, k.grid.dt, "rk4")


@pytest.mark.parametrize("H", [0.6, 0.9])
def test_fbm_and_bm_variances(H):
    p, k = _setup(H=H, n=128)
    b = simulate_batch_arrays(p, k, 20000, RngSpec(11))
    se = np.sqrt(2 / 20000)
    assert abs(np.var(b.bm[:, -1, 0]) - 1) < 4 * se
    assert abs(np.var(b.fbm[:, -1, 0]) - 1) < 4 * se + 0.01
    t = 64
    assert abs(np.var(b.fbm[:, t, 0]) / 0.5 ** (2 * H) - 1) < 4 * se + 0.01


def test_mean_reversion_shrinks_variance():
    p, k = _setup(n=128)
    b = simulate_batch_arrays(p, k, 5000, RngSpec(3))
    assert np.var(b.fou[:, -1, 0]) < 0.8 * np.var(b.fbm[:, -1, 0])


def test_deterministic_and_chunk_independent():
    p, k = _setup()
    full = simulate_batch_arrays(p, k, 30, RngSpec(8))
    again = simulate_batch_arrays(p, k, 30, RngSpec(8))
    assert np.array_equal(full.fou, again.fou)
    parts = np.concatenate([b.fou for b in iter_batches(p, k, 30, RngSpec(8), chunk=7)])
    assert np.array_equal(parts, full.fou)


def test_threads_do_not_change_results():
    p, k = _setup()
    fn = lambda b: b.fou[:, -1, 0].copy()
    set_threads(1)
    one = np.concatenate(map_batches(fn, p, k, 100, RngSpec(4), chunk=16))
    set_threads(4)
    try:
        four = np.concatenate(map_batches(fn, p, k, 100, RngSpec(4), chunk=16))
    finally:
        set_threads(1)
    assert np.array_equal(one, four)
    with pytest.raises(ConfigurationError):
        set_threads(0)


def test_bundle_matches_batch_of_one():
    p, k = _setup()
    b = simulate_bundle(p, k, RngSpec(6, 3))
    lst = simulate_batch(p, k, 4, RngSpec(6))
    assert np.array_equal(b.fou.values, lst[3].fou.values)
    assert b.rng == RngSpec(6, 3)


def test_kernel_hurst_mismatch():
    p, _ = _setup(H=0.7)
    _, k = _setup(H=0.8)
    with pytest.raises(ConfigurationError):
        simulate_batch_arrays(p, k, 2, RngSpec(0))


def test_csv_layouts():
    p, k = _setup(n=4, dim=2)
    b = simulate_batch_arrays(p, k, 2, RngSpec(1))
    buf = io.StringIO()
    write_paths_csv(buf, k.grid.points, b)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "path_id,t,bm_1,bm_2,fbm_1,fbm_2,fou_1,fou_2"
    assert len(lines) == 1 + 2 * 5
    buf = io.StringIO()
    write_paths_csv(buf, k.grid.points, b, long_format=False)
    assert buf.getvalue().splitlines()[0].startswith("t,")
    row = lines[7].split(",")
    assert row[0] == "1" and float(row[-1]) == b.fou[1, 1, 1]
