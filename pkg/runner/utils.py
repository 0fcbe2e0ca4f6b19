# runner/utils.py

import logging
import platform

import numpy as np

from calculus.hoelder_fields import build_field
from config import Config
from errors import ConfigError
from paths.drivers import DriverSpec, build_driver
from paths.grid_control import DiscretePath

# Short names accepted by --kind
KIND_ALIASES = {
    "initial": "initial-point",
    "initial-point": "initial-point",
    "field": "field-direction",
    "field-direction": "field-direction",
    "dilation": "dilation",
    "translation": "translation",
}


def parse_deltas(text):
    """
    Parses a comma-separated list of perturbation sizes such as "1e-2,1e-3,1e-4".

    Returns:
    - list: The sizes as floats.
    """
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"Cannot parse perturbation sizes '{text}': {e}") from e


def resolve_kind(text):
    kind = KIND_ALIASES.get(str(text).lower())
    if kind is None:
        raise ConfigError(f"Unknown perturbation kind '{text}'. Known kinds: {', '.join(sorted(KIND_ALIASES))}.")
    return kind


def initial_point(config, n):
    """
    The initial point of a run: config.a when given (a scalar is broadcast), else the vector of ones.
    """
    if config.a is None:
        return np.ones(n)
    a = np.atleast_1d(np.array(config.a, dtype=float))
    if a.size == 1:
        return np.full(n, float(a[0]))
    if a.size != n:
        raise ConfigError(f"Initial point has {a.size} components, the field acts on R^{n}.")
    return a


def build_problem(config, rough=True):
    """
    Resolves the driver and field strings of a run configuration.

    Returns:
    - tuple: (DriverSpec, RoughPath, VectorField, initial point).
    """
    spec = DriverSpec.parse(config.driver, default_N=config.N, default_seed=config.seed)
    X = build_driver(spec, config.p, rough=rough and config.p >= 2)
    f = build_field(config.field, d=spec.d)
    if f.d != spec.d:
        raise ConfigError(f"Field '{f.name}' is driven by R^{f.d}, the driver is {spec.d}-dimensional.")
    a = initial_point(config, f.n)
    logging.info(f"Problem: driver {spec.to_string()}, field {f.describe()}, a = {a.tolist()}")
    return spec, X, f, a


def translation_direction(X, amplitude=0.5):
    """
    Smooth translation path h^a_t = amplitude * sin(2 pi (a + 1) t) on the grid of X, of finite 1-variation.
    """
    t = X.grid.times
    values = amplitude * np.sin(2 * np.pi * np.outer(t - t[0], np.arange(1, X.d + 1)))
    return DiscretePath(X.grid, values)


def environment():
    return {"version": Config.VERSION, "python": platform.python_version(), "numpy": np.__version__}
