from __future__ import annotations

import numpy as np
import pytest

from fracou.errors import DimensionError, InvalidGridError
from fracou.grid import RngSpec, VecPath, make_grid, sample_bm_increments, sample_bm_increments_batch


def test_grid_points_and_spacing():
    g = make_grid(8)
    assert g.points[0] == 0.0 and g.points[-1] == 1.0
    assert np.allclose(np.diff(g.points), g.dt)
    assert np.allclose(g.midpoints, g.points[:-1] + 0.5 * g.dt)


@pytest.mark.parametrize("n", [0, 1, 2.5, -4])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(InvalidGridError):
        make_grid(n)


def test_index_of():
    g = make_grid(4)
    assert g.index_of(0.5) == 2
    assert g.index_of(0.3) is None
    assert g.index_of(1.5) is None


def test_vecpath_validation():
    g = make_grid(4)
    VecPath(g, np.zeros((5, 2)))
    with pytest.raises(DimensionError):
        VecPath(g, np.zeros((4, 1)))
    bad = np.zeros((5, 1))
    bad[0] = 1.0
    with pytest.raises(ValueError):
        VecPath(g, bad)


def test_streams_reproducible_and_distinct():
    g = make_grid(64)
    a = sample_bm_increments(g, 2, RngSpec(3, 5))
    b = sample_bm_increments(g, 2, RngSpec(3, 5))
    c = sample_bm_increments(g, 2, RngSpec(3, 6))
    d = sample_bm_increments(g, 2, RngSpec(4, 5))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_batch_matches_single_streams():
    g = make_grid(16)
    batch = sample_bm_increments_batch(g, 1, RngSpec(9, 100), 5)
    for i in range(5):
        assert np.array_equal(batch[i], sample_bm_increments(g, 1, RngSpec(9, 100 + i)))


def test_increment_variance():
    g = make_grid(32)
    x = sample_bm_increments_batch(g, 1, RngSpec(1), 4000)
    assert abs(x.var() / g.dt - 1.0) < 0.02


def test_negative_dim_rejected():
    with pytest.raises(DimensionError):
        sample_bm_increments(make_grid(4), 0, RngSpec(0))
