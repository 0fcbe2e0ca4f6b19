# tests/test_hoelder_fields.py

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from calculus.hoelder_fields import (VectorField, build_field, check_derivatives, check_norm_bounds, combine_fields,
                                     compose_fields, hoelder_seminorm_estimate, interpolation_check, omega_derivative,
                                     omega_hoelder_probe, omega_map)
from errors import ConfigError, DimensionMismatchError, InsufficientRegularityError, RegimeError
from paths.grid_control import DiscretePath, Grid, make_rng


def test_registry_builds_fields_with_shapes():
    f = build_field("tanh:A=2,scale=1.5", n=3, d=2)
    assert (f.n, f.d, f.k) == (3, 2, 3)
    assert f(np.zeros((5, 3))).shape == (5, 3, 2)
    assert f.derivative(2, np.zeros(3)).shape == (3, 2, 3, 3)
    rotation = build_field("rotation")
    assert (rotation.n, rotation.d) == (2, 1)
    assert build_field("linear:n=2,d=3").out_shape == (2, 3)


@pytest.mark.parametrize("text, n", [("spiral", 1), ("rotation", 3), ("linear:lambda", 1)])
def test_registry_errors(text, n):
    with pytest.raises(ConfigError):
        build_field(text, n=n)


def test_linear_field_values():
    f = build_field("linear:lambda=0.5,bias=1")
    assert np.allclose(f(np.array([2.0])), [[2.0]])
    assert not f.bounded
    assert np.allclose(f.derivative(2, np.ones(1)), 0.0)


def test_point_dimension_is_checked():
    with pytest.raises(DimensionMismatchError):
        build_field("tanh", n=2)(np.zeros(3))


def test_derivative_order_beyond_k():
    f = build_field("holder:gamma=0.5")
    assert f.k == 0
    with pytest.raises(InsufficientRegularityError):
        f.derivative(1, np.zeros(1))
    with pytest.raises(InsufficientRegularityError):
        omega_derivative(f, DiscretePath(Grid.uniform(2), np.zeros(3)), DiscretePath(Grid.uniform(2), np.zeros(3)))


def test_gamma_range():
    with pytest.raises(RegimeError):
        VectorField("bad", 1, 1, lambda y: y, gamma=1.5)


@pytest.mark.parametrize("text, n, d", [("tanh:scale=0.8", 2, 2), ("sin:A=1.5", 2, 3), ("linear:lambda=2", 3, 1),
                                        ("rotation:rate=2", 2, 2)])
def test_analytic_derivatives_match_differences(text, n, d):
    assert check_derivatives(build_field(text, n=n, d=d)) <= 1e-6


def test_power_field_derivative():
    assert check_derivatives(build_field("power:gamma=0.5", n=2, d=1), radius=2.0) <= 1e-4


@pytest.mark.parametrize("text", ["tanh:A=2,scale=1.5", "sin:scale=0.5", "linear:lambda=0.5"])
def test_supplied_bounds_dominate_samples(text):
    assert check_norm_bounds(build_field(text, n=2, d=2)) <= 1.0 + 1e-12


def test_sup_bound_samples_unbounded_entries():
    f = build_field("linear:lambda=2")
    assert f.sup_bound(1) == pytest.approx(2.0)
    assert f.sup_bound(0, center=np.zeros(1), radius=1.0) <= 2.0


def test_combined_field_is_weighted_sum():
    f = build_field("tanh", n=2, d=2)
    g = build_field("sin", n=2, d=2)
    h = combine_fields([f, g], [1.0, 0.25])
    y = make_rng(0).standard_normal((10, 2))
    assert np.allclose(h(y), f(y) + 0.25 * g(y))
    assert np.allclose(h.jacobian(y), f.jacobian(y) + 0.25 * g.jacobian(y))
    assert h.k == 3
    assert check_norm_bounds(h) <= 1.0 + 1e-12
    with pytest.raises(DimensionMismatchError):
        combine_fields([f, build_field("tanh", n=1, d=2)], [1.0, 1.0])


def test_composed_field_chain_rule():
    outer = build_field("linear:lambda=2")
    inner = build_field("tanh:scale=0.7")
    h = compose_fields(outer, inner)
    y = np.linspace(-1, 1, 7)[:, None]
    assert np.allclose(h(y), 2 * inner(y))
    assert h.k == 1
    assert check_derivatives(h) <= 1e-6
    with pytest.raises(DimensionMismatchError):
        compose_fields(build_field("linear", n=2), inner)


def test_hoelder_estimate_is_monotone_and_bounded():
    f = build_field("holder:gamma=0.5")
    small = hoelder_seminorm_estimate(f, 0.5, (-1.0, 1.0), 100, seed=3)
    large = hoelder_seminorm_estimate(f, 0.5, (-1.0, 1.0), 10_000, seed=3)
    assert small.H_hat <= large.H_hat <= 1.0 + 1e-12
    with pytest.raises(ConfigError):
        hoelder_seminorm_estimate(f, 0.5, (1.0, 1.0), 10)
    with pytest.raises(RegimeError):
        hoelder_seminorm_estimate(f, 1.5, (-1.0, 1.0), 10)


@seed(1)
@settings(deadline=None, max_examples=30)
@given(arrays(np.float64, (200, 4, 1), elements=st.floats(-3.0, 3.0)), st.floats(0.0, 1.0))
def test_interpolation_inequality_for_square_root(quads, kappa):
    assert interpolation_check(build_field("holder:gamma=0.5"), 0.5, kappa, quads) <= 1e-12


def test_interpolation_inequality_for_lipschitz_field():
    quads = make_rng(2).uniform(-2, 2, size=(5000, 4, 2))
    f = build_field("tanh:scale=1.2", n=2, d=1)
    for kappa in (0.25, 0.5, 0.75):
        assert interpolation_check(f, 1.0, kappa, quads) <= 1e-12


def test_omega_map_and_derivative():
    grid = Grid.uniform(32)
    f = build_field("tanh", n=2, d=1)
    y = DiscretePath(grid, np.column_stack([np.sin(grid.times), grid.times]))
    h = DiscretePath(grid, np.column_stack([grid.times, np.ones(33)]))
    eps = 1e-6
    fd = (omega_map(f, y + eps * h).values - omega_map(f, y - eps * h).values) / (2 * eps)
    assert np.allclose(omega_derivative(f, y, h).values, fd, atol=1e-8)
    with pytest.raises(DimensionMismatchError):
        omega_map(build_field("tanh", n=3), y)


def test_omega_hoelder_probe_holds():
    grid = Grid.uniform(256)
    f = build_field("holder:gamma=0.5")
    y = DiscretePath(grid, 0.8 * np.sin(2 * np.pi * grid.times))
    z = y + DiscretePath(grid, 0.3 * grid.times)
    for kappa in (0.25, 0.5, 0.75):
        result = omega_hoelder_probe(f, y, z, 1.5, kappa=kappa)
        assert result.holds
        assert result.ratio > 0


def test_omega_hoelder_probe_needs_constant():
    grid = Grid.uniform(8)
    f = VectorField("anon", 1, 1, lambda y: y[..., None], gamma=0.5)
    y = DiscretePath(grid, grid.times)
    with pytest.raises(InsufficientRegularityError):
        omega_hoelder_probe(f, y, y, 1.5, kappa=0.5)
