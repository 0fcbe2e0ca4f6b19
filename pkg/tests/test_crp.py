# tests/test_crp.py

import numpy as np
import pytest

from calculus.crp import (ControlledPath, canonical_crp, crp_integral, crp_norms, crp_omega, crp_omega_derivative,
                          crp_product, flat, flat_bound_check, integral_bound_check, omega_indices,
                          omega_remainder_check, product_constant, sewing_exponent, x_full_norm)
from calculus.hoelder_fields import build_field
from errors import DimensionMismatchError, InsufficientRegularityError, RegimeError
from paths.drivers import DriverSpec, build_driver
from paths.grid_control import sample_triples


@pytest.fixture
def scalar_fbm():
    return build_driver(DriverSpec(kind="fbm", d=1, N=256, H=0.4, seed=3), 2.5)


def test_sewing_exponent():
    assert sewing_exponent(2.5, 2.5, 1.25) == pytest.approx(1.2)
    assert sewing_exponent(2.0, 4.0, 1.0) == pytest.approx(1.25)


def test_canonical_crp_has_no_remainder(fbm_lift):
    Y = canonical_crp(fbm_lift)
    triples = sample_triples(Y.N, 50, seed=1)
    assert np.allclose(Y.remainder_increments(triples[:, 0], triples[:, 2]), 0.0, atol=1e-14)
    assert Y.indices == (2.5, 2.5, 1.25)


def test_dagger_shape_is_checked(fbm_lift):
    with pytest.raises(DimensionMismatchError):
        ControlledPath(fbm_lift, fbm_lift.path(), np.zeros((fbm_lift.N + 1, 2, 3)))


def test_flat_of_canonical_is_level_two(fbm_lift):
    fam = flat(canonical_crp(fbm_lift))
    triples = sample_triples(fbm_lift.N, 100, seed=2)
    ii, jj = triples[:, 0], triples[:, 2]
    assert np.allclose(fam.increments(ii, jj), fbm_lift.level2_increments(ii, jj), atol=1e-12)
    assert fam.cocycle_defect(triples) <= 1e-12
    assert fam.steps.shape == (fbm_lift.N, 2, 2)


def test_flat_needs_sewing_regime(fbm_lift):
    Y = canonical_crp(fbm_lift)
    slow = ControlledPath(fbm_lift, Y.y, Y.ydag, 2.5, 2.5, 2.5)
    with pytest.raises(RegimeError):
        flat(slow)


def test_integral_of_x_dx(scalar_fbm):
    Y = canonical_crp(scalar_fbm)
    integral = crp_integral(Y, Y)
    x = scalar_fbm.path().values[:, 0]
    assert np.allclose(integral.y.values[:, 0], 0.5 * (x ** 2 - x[0] ** 2), atol=1e-12)
    assert np.allclose(integral.ydag[:, 0, 0], x)
    assert integral.indices == (2.5, 2.5, 1.25)


def test_integral_bound_constants_are_finite(fbm_lift):
    Y = crp_omega(build_field("tanh", n=2, d=2), canonical_crp(fbm_lift))
    # Y takes values in L(R^2, R^2); integrate against the canonical path
    check = integral_bound_check(Y, canonical_crp(fbm_lift))
    assert np.isfinite(check.K) and np.isfinite(check.K_prime)
    assert check.K_prime > 0


def test_integral_needs_a_common_rough_path(fbm_lift, scalar_fbm):
    with pytest.raises(DimensionMismatchError):
        crp_integral(canonical_crp(scalar_fbm), canonical_crp(fbm_lift))


def test_norm_inequalities_hold(fbm_lift):
    norms = crp_norms(canonical_crp(fbm_lift))
    assert norms.holds
    assert norms.remainder <= 1e-12
    assert norms.to_dict()["x_full"] == pytest.approx(norms.full)
    assert x_full_norm(canonical_crp(fbm_lift)) == pytest.approx(norms.full)


def test_flat_bound_constants(fbm_lift):
    Y = crp_omega(build_field("tanh", n=2, d=2), canonical_crp(fbm_lift))
    check = flat_bound_check(Y)
    assert np.isfinite(check.K)
    assert np.isfinite(check.K_prime)


def test_product_leibniz_rule(scalar_fbm):
    Y = canonical_crp(scalar_fbm)
    square = crp_product(Y, Y)
    x = scalar_fbm.path().values[:, 0]
    assert np.allclose(square.y.values[:, 0], x ** 2)
    assert np.allclose(square.ydag[:, 0, 0], 2 * x)
    tensor = crp_product(Y, Y, mode="tensor")
    assert tensor.value_shape == (1, 1)
    assert np.isfinite(product_constant(Y, Y))
    with pytest.raises(DimensionMismatchError):
        crp_product(Y, Y, mode="hadamard")


def test_omega_of_linear_field(scalar_fbm):
    Y = canonical_crp(scalar_fbm)
    out = crp_omega(build_field("linear:lambda=0.5"), Y)
    x = scalar_fbm.path().values[:, 0]
    assert np.allclose(out.y.values[:, 0, 0], 0.5 * x)
    assert np.allclose(out.ydag, 0.5)
    assert out.indices == omega_indices(Y, 1.0)


def test_omega_needs_a_derivative(scalar_fbm):
    with pytest.raises(InsufficientRegularityError):
        crp_omega(build_field("holder:gamma=0.5"), canonical_crp(scalar_fbm))


def test_omega_remainder_formula(fbm_lift):
    assert omega_remainder_check(build_field("tanh:scale=0.8", n=2, d=2), canonical_crp(fbm_lift)) <= 1e-5


def test_omega_derivative_matches_differences(fbm_lift):
    f = build_field("tanh:scale=0.8", n=2, d=2)
    Y = canonical_crp(fbm_lift)
    Z = 0.3 * Y
    eps = 1e-6
    plus, minus = crp_omega(f, Y + eps * Z), crp_omega(f, Y - eps * Z)
    derivative = crp_omega_derivative(f, Y, Z)
    assert np.allclose(derivative.y.values, (plus.y.values - minus.y.values) / (2 * eps), atol=1e-7)
    assert np.allclose(derivative.ydag, (plus.ydag - minus.ydag) / (2 * eps), atol=1e-7)


def test_starred_direction_gives_starred_derivative(fbm_lift):
    f = build_field("sin", n=2, d=2)
    Y = canonical_crp(fbm_lift)
    x = fbm_lift.path()
    Z = ControlledPath(fbm_lift, x.values - x.values[0], np.zeros_like(Y.ydag))
    assert Z.is_starred()
    assert crp_omega_derivative(f, Y, Z).is_starred(atol=1e-15)


def test_restrict_and_arithmetic(fbm_lift):
    Y = canonical_crp(fbm_lift)
    window = Y.restrict(10, 50)
    assert window.N == 40
    assert np.allclose(window.y.values, Y.y.values[10:51])
    doubled = Y + Y
    assert np.allclose(doubled.ydag, 2 * Y.ydag)
    assert np.allclose((Y - Y).y.values, 0.0)
