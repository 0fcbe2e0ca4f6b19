# tests/conftest.py

import numpy as np
import pytest

from paths.drivers import DriverSpec, build_driver, lift_piecewise_linear, smooth_path
from paths.grid_control import DiscretePath, Grid


def smooth_lift(kind="smooth-poly", N=256, d=1, p=2.5, **params):
    return lift_piecewise_linear(smooth_path(DriverSpec(kind=kind, d=d, N=N, params=params)), p)


@pytest.fixture
def unit_grid():
    return Grid.uniform(64)


@pytest.fixture
def sine_path():
    grid = Grid.uniform(1024)
    return DiscretePath(grid, np.sin(2 * np.pi * grid.times))


@pytest.fixture
def poly_lift():
    return smooth_lift("smooth-poly", 256)


@pytest.fixture
def fbm_lift():
    return build_driver(DriverSpec(kind="fbm", d=2, N=256, H=0.4, seed=7), 2.5)
