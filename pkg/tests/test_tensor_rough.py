# tests/test_tensor_rough.py

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errors import DimensionMismatchError, RegimeError, YoungConditionError
from paths.drivers import pure_area
from paths.grid_control import DiscretePath, Grid, sample_triples
from paths.tensor_rough import (RoughPath, Tensor2, chen_defect, dilate, geometric_defect, rough_norm,
                                tensor_inv, tensor_mul, translate)
from tests.conftest import smooth_lift

vectors = arrays(np.float64, 3, elements=st.floats(-3.0, 3.0))
matrices = arrays(np.float64, (3, 3), elements=st.floats(-3.0, 3.0))


@seed(1)
@settings(deadline=None)
@given(vectors, matrices, vectors, matrices, vectors, matrices)
def test_product_is_associative(v1, m1, v2, m2, v3, m3):
    a, b, c = Tensor2(v1, m1), Tensor2(v2, m2), Tensor2(v3, m3)
    assert ((a * b) * c).distance(a * (b * c)) <= 1e-12


@seed(2)
@settings(deadline=None)
@given(vectors, matrices)
def test_inverse_is_two_sided(v, m):
    a = Tensor2(v, m)
    e = Tensor2.identity(3)
    assert (a * a.inverse()).distance(e) <= 1e-12
    assert (a.inverse() * a).distance(e) <= 1e-12


def test_identity_is_neutral():
    a = Tensor2([1.0, 2.0], [[0.5, 1.0], [-1.0, 2.0]])
    assert (a * Tensor2.identity(2)).distance(a) == 0.0
    assert tensor_mul(Tensor2.identity(2), a).distance(a) == 0.0
    assert tensor_inv(Tensor2.identity(2)).distance(Tensor2.identity(2)) == 0.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        Tensor2([1.0, 2.0], np.zeros((3, 3)))
    with pytest.raises(DimensionMismatchError):
        Tensor2([1.0]) * Tensor2([1.0, 2.0])


def test_rough_path_rejects_bad_p():
    grid = Grid.uniform(4)
    with pytest.raises(RegimeError):
        RoughPath(grid, None, np.zeros((4, 1)), np.zeros((4, 1, 1)), 3.0)


def test_prefix_increments_match_chen_composition(fbm_lift):
    for r, _, t in sample_triples(fbm_lift.N, 50, seed=5):
        direct = fbm_lift.increment(r, t)
        ii, jj = np.array([r]), np.array([t])
        assert np.allclose(direct.level1, fbm_lift.level1_increments(ii, jj)[0], atol=1e-12)
        assert np.allclose(direct.level2, fbm_lift.level2_increments(ii, jj)[0], atol=1e-12)


def test_chen_relation_on_triples(fbm_lift):
    for r, s, t in sample_triples(fbm_lift.N, 50, seed=9):
        composed = fbm_lift.increment(r, s) * fbm_lift.increment(s, t)
        assert composed.distance(fbm_lift.increment(r, t)) <= 1e-12


def test_empty_increment_is_identity(fbm_lift):
    assert fbm_lift.increment(4, 4).distance(Tensor2.identity(2)) == 0.0
    with pytest.raises(IndexError):
        fbm_lift.increment(5, 4)


def test_piecewise_linear_lift_is_geometric(fbm_lift):
    assert geometric_defect(fbm_lift) <= 1e-14


def test_pure_area_is_not_geometric():
    X = pure_area([[0.0, 1.0], [-1.0, 0.0]], 1.0, Grid.uniform(16))
    assert geometric_defect(X) > 0
    inc = X.increment(0, 16)
    assert np.allclose(inc.level1, 0.0)
    assert np.allclose(inc.level2, [[0.0, 1.0], [-1.0, 0.0]])


def test_restrict_matches_increments(fbm_lift):
    window = fbm_lift.restrict(10, 40)
    assert window.N == 30
    assert window.increment(0, 30).distance(fbm_lift.increment(10, 40)) <= 1e-12
    assert np.allclose(window.start, fbm_lift.path().values[10])


def test_rough_norm_of_linear_lift():
    X = smooth_lift("smooth-poly", 64, d=1, p=2.5)
    norm = rough_norm(X)
    # x = t: level 1 ratio (t-s)^{1-1/p}, level 2 ratio sqrt(1/2) (t-s)^{1-1/p}
    assert norm.level1 == pytest.approx(1.0)
    assert norm.level2 == pytest.approx(np.sqrt(0.5))
    assert norm.value == norm.level1


def test_dilation_scales_levels(fbm_lift):
    eps = 0.3
    Y = dilate(fbm_lift, eps)
    a, b = fbm_lift.increment(3, 50), Y.increment(3, 50)
    assert np.allclose(b.level1, eps * a.level1)
    assert np.allclose(b.level2, eps ** 2 * a.level2)


def test_translation_of_smooth_lift_is_lift_of_sum():
    X = smooth_lift("smooth-sin", 128, d=2)
    h = DiscretePath(X.grid, 0.5 * np.column_stack([X.grid.times, X.grid.times ** 2]))
    Y = translate(X, h, 1.0)
    direct = smooth_lift("smooth-sin", 128, d=2)
    expected_path = direct.path() + h
    assert np.allclose(Y.path().values, expected_path.values, atol=1e-12)
    assert geometric_defect(Y) <= 1e-12


def test_translation_needs_young_pairing(fbm_lift):
    h = DiscretePath(fbm_lift.grid, np.zeros((fbm_lift.N + 1, 2)))
    with pytest.raises(YoungConditionError):
        translate(fbm_lift, h, 2.0)


def test_chen_defect_of_in_memory_path_is_zero(fbm_lift):
    assert chen_defect(fbm_lift) == 0.0
