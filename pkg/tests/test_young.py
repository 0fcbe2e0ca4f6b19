# tests/test_young.py

import logging

import numpy as np
import pytest

from calculus.sewing import defect_scan
from calculus.young import align_integrand, contract, young_bound_check, young_germ, young_integral
from errors import DimensionMismatchError, YoungConditionError
from paths.grid_control import DiscretePath, Grid


def test_second_order_germ_is_exact_for_x_dx(sine_path):
    ones = np.ones((len(sine_path.grid), 1, 1))
    integral = young_integral(sine_path, sine_path, 1.0, 1.0, integrand_dagger=ones)
    exact = 0.5 * (sine_path.values[:, 0] ** 2 - sine_path.values[0, 0] ** 2)
    assert np.max(np.abs(integral.values[:, 0] - exact)) <= 1e-12


def test_left_point_integral_converges_at_first_order():
    errors = []
    for N in (256, 512, 1024):
        grid = Grid.uniform(N)
        x = DiscretePath(grid, grid.times)
        y = DiscretePath(grid, grid.times ** 2)
        integral = young_integral(y, x, 1.0, 1.0).values[-1, 0]
        errors.append(abs(integral - 1.0 / 3.0))
    assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.05)
    assert errors[1] / errors[2] == pytest.approx(2.0, rel=0.05)


def test_integral_starts_at_zero_and_is_additive(sine_path):
    integral = young_integral(sine_path, sine_path, 1.5, 1.5)
    assert integral.values[0, 0] == 0.0
    germ = young_germ(sine_path, sine_path, 1.5, 1.5)
    assert germ.theta == pytest.approx(4 / 3)


def test_young_condition():
    grid = Grid.uniform(4)
    x = DiscretePath(grid, grid.times)
    with pytest.raises(YoungConditionError):
        young_integral(x, x, 2.0, 2.0)
    with pytest.raises(YoungConditionError):
        young_germ(x, x, 2.5, 1.5)


def test_matrix_valued_integrand():
    grid = Grid.uniform(128)
    x = DiscretePath(grid, np.column_stack([grid.times, grid.times ** 2]))
    y = DiscretePath(grid, np.broadcast_to(np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]), (129, 3, 2)))
    integral = young_integral(y, x, 1.0, 1.0)
    assert integral.value_shape == (3,)
    assert np.allclose(integral.values[-1], [1.0, 2.0, 2.0])


def test_shape_mismatch():
    grid = Grid.uniform(4)
    x = DiscretePath(grid, np.zeros((5, 2)))
    y = DiscretePath(grid, np.zeros((5, 3)))
    with pytest.raises(DimensionMismatchError):
        young_integral(y, x, 1.0, 1.0)


def test_integrand_is_interpolated_not_integrator(caplog):
    coarse = Grid.uniform(64)
    fine = coarse.refine(4)
    x = DiscretePath(fine, fine.times)
    y = DiscretePath(coarse, coarse.times)
    with caplog.at_level(logging.WARNING):
        aligned = align_integrand(y, x)
    assert aligned.grid.same_as(fine)
    assert np.allclose(aligned.values[:, 0], fine.times)
    assert "interpolated" in caplog.text
    with pytest.raises(DimensionMismatchError):
        align_integrand(DiscretePath(Grid.uniform(4, T=2.0), np.zeros(5)), x)


def test_bound_constant_is_stable(sine_path):
    K = young_bound_check(sine_path, sine_path, 1.5, 1.5)
    assert 0 < K < 1.0
    grid = Grid.uniform(16)
    flat_path = DiscretePath(grid, np.zeros(17))
    assert young_bound_check(flat_path, flat_path, 1.5, 1.5) == 0.0


def test_defect_exponent_of_young_germ():
    grid = Grid.uniform(1024)
    x = DiscretePath(grid, grid.times)
    germ = young_germ(x, x, 1.5, 1.5)
    report = defect_scan(germ, grid, seed=4)
    assert report.theta_hat >= germ.theta - 0.1


def test_contract_applies_maps_pointwise():
    y = np.arange(12, dtype=float).reshape(2, 3, 2)
    dx = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(contract(y, dx), [[0.0, 2.0, 4.0], [7.0, 9.0, 11.0]])


def test_second_order_germ_evaluates_its_correction_on_every_pair(sine_path):
    ones = np.ones((len(sine_path.grid), 1, 1))
    germ = young_germ(sine_path, sine_path, 1.0, 1.0, integrand_dagger=ones)
    x = sine_path.values[:, 0]
    assert float(germ.evaluate(3, 40)) == pytest.approx(0.5 * (x[40] ** 2 - x[3] ** 2), abs=1e-12)
    steps = germ.step_values(sine_path.grid)
    assert np.allclose([float(germ.evaluate(k, k + 1)) for k in range(sine_path.grid.N)], steps, atol=1e-14)
    defects = [germ.defect(r, s, t) for r, s, t in [(0, 7, 50), (10, 200, 900), (3, 4, 1024)]]
    assert max(defects) <= 1e-12


def test_left_point_germ_has_a_measurable_defect(sine_path):
    ones = np.ones((len(sine_path.grid), 1, 1))
    first = young_germ(sine_path, sine_path, 1.0, 1.0)
    second = young_germ(sine_path, sine_path, 1.0, 1.0, integrand_dagger=ones)
    assert first.defect(10, 200, 900) > 1e-3
    assert second.defect(10, 200, 900) <= 1e-12
