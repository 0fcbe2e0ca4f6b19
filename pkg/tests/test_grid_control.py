# tests/test_grid_control.py

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errors import DimensionMismatchError, InvalidGridError, RegimeError
from paths.grid_control import (ControlFn, DiscretePath, Grid, full_norm, iter_pair_blocks, make_rng, pvar_norm,
                                safe_ratio, sample_triples, sup_embedding_check)


def test_uniform_grid_endpoints():
    grid = Grid.uniform(8, T=2.0)
    assert grid.N == 8
    assert len(grid) == 9
    assert grid.start == 0.0
    assert grid.T == 2.0


@pytest.mark.parametrize("times", [[0.0], [0.0, 0.5, 0.5, 1.0], [1.0, 0.0]])
def test_invalid_grids_are_rejected(times):
    with pytest.raises(InvalidGridError):
        Grid(times)


def test_refine_contains_original_instants():
    grid = Grid(np.array([0.0, 0.1, 0.5, 1.0]))
    fine = grid.refine(4)
    assert fine.N == 12
    assert fine.contains(grid)
    assert not grid.contains(fine)


def test_restrict_keeps_absolute_times():
    grid = Grid.uniform(10)
    window = grid.restrict(3, 7)
    assert window.N == 4
    assert window.start == pytest.approx(0.3)
    with pytest.raises(InvalidGridError):
        grid.restrict(5, 5)
    with pytest.raises(InvalidGridError):
        grid.restrict(0, 11)


def test_difference_control_is_additive():
    assert ControlFn().validate(Grid.uniform(10), n_triples=1000) <= 1e-12


def test_power_control_validates_and_sub_additive_one_breaches():
    grid = Grid.uniform(10)
    assert ControlFn(lambda s, t: (t - s) ** 2, kind="square").validate(grid, 1000) <= 1e-12
    assert ControlFn(lambda s, t: np.sqrt(t - s), kind="sqrt").validate(grid, 1000) > 0


def test_discrete_path_shape_checks():
    grid = Grid.uniform(4)
    with pytest.raises(DimensionMismatchError):
        DiscretePath(grid, np.zeros(3))
    a = DiscretePath(grid, np.zeros((5, 2)))
    with pytest.raises(DimensionMismatchError):
        a + DiscretePath(grid, np.zeros((5, 3)))
    with pytest.raises(DimensionMismatchError):
        a - DiscretePath(Grid.uniform(4, T=2.0), np.zeros((5, 2)))


def test_safe_ratio_conventions():
    out = safe_ratio([0.0, 1.0, 2.0], [0.0, 0.0, 4.0])
    assert out[0] == 0.0
    assert np.isinf(out[1])
    assert out[2] == 0.5


def test_pvar_norm_of_linear_path():
    grid = Grid.uniform(64)
    x = DiscretePath(grid, 3.0 * grid.times)
    assert pvar_norm(x, 1.0) == pytest.approx(3.0)
    # |x_{s,t}| / (t-s)^{1/2} peaks on the whole interval
    assert pvar_norm(x, 2.0) == pytest.approx(3.0)


def test_pvar_norm_rejects_small_p(sine_path):
    with pytest.raises(RegimeError):
        pvar_norm(sine_path, 0.5)


def test_repeated_instant_value_is_infinite_norm():
    grid = Grid([0.0, 1.0, 2.0])
    omega = ControlFn(lambda s, t: np.where(s >= 1.0, 0.0, t - s), kind="degenerate")
    x = DiscretePath(grid, [0.0, 0.0, 1.0])
    assert np.isinf(pvar_norm(x, 1.0, omega))


def test_dyadic_scan_is_a_lower_bound(sine_path):
    exact = pvar_norm(sine_path, 2.0)
    subsampled = pvar_norm(sine_path, 2.0, scan_limit=16)
    assert subsampled <= exact + 1e-15


def test_pair_blocks_cover_all_pairs_below_limit():
    pairs = {(int(i), int(j)) for ii, jj in iter_pair_blocks(6) for i, j in zip(ii, jj)}
    assert pairs == {(i, j) for i in range(6) for j in range(i + 1, 7)}


def test_sample_triples_are_ordered_and_reproducible():
    a = sample_triples(100, 50, seed=3)
    b = sample_triples(100, 50, seed=3)
    assert np.array_equal(a, b)
    assert np.all(a[:, 0] < a[:, 1]) and np.all(a[:, 1] < a[:, 2])
    assert np.all(a[:, 2] <= 100)
    assert sample_triples(1, 10).shape == (0, 3)


def test_make_rng_is_reproducible():
    assert np.array_equal(make_rng(11).standard_normal(5), make_rng(11).standard_normal(5))


@seed(1)
@settings(deadline=None, max_examples=50)
@given(arrays(np.float64, (33, 2), elements=st.floats(-10.0, 10.0)),
       st.sampled_from([1.0, 1.5, 2.0, 2.5]))
def test_sup_embedding_holds(values, p):
    x = DiscretePath(Grid.uniform(32), values)
    assert sup_embedding_check(x, p).holds


@seed(2)
@settings(deadline=None, max_examples=50)
@given(arrays(np.float64, (17, 1), elements=st.floats(-5.0, 5.0)), st.floats(1.0, 2.9))
def test_full_norm_is_start_plus_seminorm(values, p):
    x = DiscretePath(Grid.uniform(16), values)
    assert full_norm(x, p) == pytest.approx(abs(values[0, 0]) + pvar_norm(x, p))
