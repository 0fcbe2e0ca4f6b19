# tests/test_drivers.py

import numpy as np
import pytest

from errors import ConfigError, RegimeError
from paths.drivers import (DriverSpec, build_driver, default_area_matrix, fgn_autocovariance, pure_area, sample_bm,
                           sample_fbm, smooth_path)
from paths.grid_control import Grid
from paths.tensor_rough import geometric_defect


def test_parse_and_render_spec():
    spec = DriverSpec.parse("fbm:H=0.4,d=2,N=512,seed=3")
    assert (spec.kind, spec.H, spec.d, spec.N, spec.seed) == ("fbm", 0.4, 2, 512, 3)
    assert DriverSpec.parse(spec.to_string()) == spec


def test_parse_uses_defaults():
    spec = DriverSpec.parse("smooth-sin:freq=2", default_N=64, default_seed=11)
    assert spec.N == 64
    assert spec.seed == 11
    assert spec.params == {"freq": 2}


@pytest.mark.parametrize("text", ["brownian:N=8", "fbm:N=100", "fbm:H=1.5", "pure-area:d=1", "bm:N=0"])
def test_invalid_specs(text):
    with pytest.raises(ConfigError):
        DriverSpec.parse(text)


def test_fbm_is_reproducible_and_starts_at_zero():
    spec = DriverSpec(kind="fbm", d=2, N=256, H=0.3, seed=5)
    a, b = sample_fbm(spec), sample_fbm(spec)
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[0] == 0.0)
    other = sample_fbm(DriverSpec(kind="fbm", d=2, N=256, H=0.3, seed=6))
    assert not np.array_equal(a.values, other.values)


@pytest.mark.parametrize("H", [0.3, 0.5, 0.7])
def test_fbm_increment_variance(H):
    N = 4096
    path = sample_fbm(DriverSpec(kind="fbm", d=1, N=N, H=H, seed=7))
    steps = np.diff(path.values[:, 0])
    assert np.mean(steps ** 2) == pytest.approx(N ** (-2 * H), rel=0.15)


def test_fgn_autocovariance_at_half_is_white():
    gamma = fgn_autocovariance(0.5, 5)
    assert gamma[0] == pytest.approx(1.0)
    assert np.allclose(gamma[1:], 0.0, atol=1e-14)


def test_fbm_needs_h_below_one():
    with pytest.raises(RegimeError):
        sample_fbm(DriverSpec(kind="fbm", N=8, H=1.0))


def test_bm_scaling():
    path = sample_bm(DriverSpec(kind="bm", d=1, N=8192, seed=1))
    assert np.mean(np.diff(path.values[:, 0]) ** 2) == pytest.approx(1 / 8192, rel=0.1)


def test_smooth_drivers():
    sin = smooth_path(DriverSpec(kind="smooth-sin", d=2, N=4, params={"amp": 2.0}))
    assert np.allclose(sin.values[1], [2.0 * np.sin(np.pi / 2), 2.0 * np.sin(np.pi)])
    poly = smooth_path(DriverSpec(kind="smooth-poly", d=2, N=4))
    assert np.allclose(poly.values[2], [0.5, 0.25])
    with pytest.raises(ConfigError):
        smooth_path(DriverSpec(kind="bm", N=4))


def test_pure_area_driver():
    X = build_driver(DriverSpec.parse("pure-area:c=0.5,N=16"), 2.5)
    assert X.d == 2
    assert np.allclose(X.path().values, 0.0)
    assert np.allclose(X.increment(0, 16).level2, 0.5 * default_area_matrix(2))


def test_pure_area_rejects_symmetric_matrix():
    with pytest.raises(ConfigError):
        pure_area(np.eye(2), 1.0, Grid.uniform(4))


def test_lift_is_geometric():
    X = build_driver(DriverSpec(kind="bm", d=3, N=128, seed=2), 2.5)
    assert geometric_defect(X) <= 1e-14


def test_rough_solves_need_h_above_a_third():
    with pytest.raises(RegimeError):
        build_driver(DriverSpec(kind="fbm", N=64, H=0.3), 2.5, rough=True)
    assert build_driver(DriverSpec(kind="fbm", N=64, H=0.3), 2.5).N == 64
