# paths/drivers.py

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, toeplitz

from config import Config, parse_kv_spec
from errors import ConfigError, RegimeError
from paths.grid_control import DiscretePath, Grid, make_rng
from paths.tensor_rough import RoughPath

DRIVER_KINDS = ("smooth-sin", "smooth-poly", "bm", "fbm", "pure-area")

# Largest grid for which the Cholesky fallback of the fBm generator is attempted
CHOLESKY_LIMIT = 2 ** 11


@dataclass
class DriverSpec:
    """
    Describes a test driver. Spec strings look like "fbm:H=0.4,d=2,N=4096,seed=7".
    Keys other than d, N, H, seed and T are kept in params (e.g. freq, amp, coef, c).
    """
    kind: str
    d: int = 1
    N: int = 1024
    H: float = 0.5
    seed: int = 7
    T: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DRIVER_KINDS:
            raise ConfigError(f"Unknown driver kind '{self.kind}'. Known kinds: {', '.join(DRIVER_KINDS)}.")
        if self.d < 1 or self.N < 1:
            raise ConfigError(f"Driver needs d >= 1 and N >= 1, got d = {self.d}, N = {self.N}.")
        if not 0 < self.H <= 1:
            raise ConfigError(f"Hurst index must lie in (0, 1], got {self.H}.")
        if self.kind == "fbm" and self.N & (self.N - 1):
            raise ConfigError(f"fBm synthesis needs N to be a power of two, got {self.N}.")
        if self.kind == "pure-area" and self.d < 2:
            raise ConfigError("A pure-area driver needs d >= 2.")

    @classmethod
    def parse(cls, text, default_N=None, default_seed=None):
        kind, params = parse_kv_spec(text)
        fields = {
            "d": int(params.pop("d", 2 if kind == "pure-area" else 1)),
            "N": int(params.pop("N", default_N or Config.DEFAULT_N)),
            "H": float(params.pop("H", 0.5)),
            "seed": int(params.pop("seed", Config.SEED if default_seed is None else default_seed)),
            "T": float(params.pop("T", 1.0)),
        }
        return cls(kind=kind, params=params, **fields)

    def to_string(self):
        items = [f"d={self.d}", f"N={self.N}", f"seed={self.seed}", f"T={self.T!r}"]
        if self.kind == "fbm":
            items.insert(0, f"H={self.H!r}")
        items += [f"{key}={value!r}" for key, value in sorted(self.params.items())]
        return f"{self.kind}:" + ",".join(items)

    @property
    def grid(self):
        return Grid.uniform(self.N, self.T)


def lift_piecewise_linear(x, p):
    """
    Canonical geometric lift of a discrete path: every segment carries the iterated integral of a straight line.

    Parameters:
    - x (DiscretePath): Path valued in R^d.
    - p (float): Regularity index attached to the lift.

    Returns:
    - RoughPath: Steps (v, 1/2 v (x) v) with v the segment increment.
    """
    values = x.flat_values
    lvl1 = np.diff(values, axis=0)
    lvl2 = 0.5 * np.einsum('ka,kb->kab', lvl1, lvl1)
    return RoughPath(x.grid, values[0], lvl1, lvl2, p)


def fgn_autocovariance(H, n):
    k = np.arange(n + 1, dtype=float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) + np.abs(k - 1) ** (2 * H) - 2 * k ** (2 * H))


def _circulant_eigenvalues(H, n):
    gamma = fgn_autocovariance(H, n)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    return np.fft.fft(row).real


def _fgn_circulant(eig, n, rng):
    w = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
    return np.fft.fft(np.sqrt(eig / (2 * n)) * w).real[:n]


def _fgn_cholesky(H, n, rng):
    cov = toeplitz(fgn_autocovariance(H, n - 1)[:n])
    return cholesky(cov, lower=True) @ rng.standard_normal(n)


def sample_fbm(spec):
    """
    Samples d independent fractional Brownian motions on the uniform grid of the spec, starting at 0.

    The fractional Gaussian noise is drawn exactly in law by circulant embedding. If the embedding has
    negative eigenvalues, the generator falls back to a Cholesky factorisation for N <= 2^11.

    Parameters:
    - spec (DriverSpec): kind 'fbm' (or 'bm'), with H in (0, 1) and N a power of two.

    Returns:
    - DiscretePath: Values of shape (N + 1, d), reproducible for a given seed.
    """
    if not 0 < spec.H < 1:
        raise RegimeError(f"fBm synthesis needs H in (0, 1), got {spec.H}.")
    n = spec.N
    rng = make_rng(spec.seed)
    eig = _circulant_eigenvalues(spec.H, n)
    use_cholesky = bool(np.min(eig) < -1e-10 * np.max(eig))
    if use_cholesky:
        if n > CHOLESKY_LIMIT:
            raise RegimeError(f"Circulant embedding is not positive and N = {n} is too large for Cholesky.")
        logging.warning(f"Circulant embedding not positive for H = {spec.H}, N = {n}: using Cholesky.")
    else:
        eig = np.clip(eig, 0.0, None)
    noise = np.empty((n, spec.d))
    for a in range(spec.d):
        noise[:, a] = _fgn_cholesky(spec.H, n, rng) if use_cholesky else _fgn_circulant(eig, n, rng)
    noise *= (spec.T / n) ** spec.H
    values = np.concatenate([np.zeros((1, spec.d)), np.cumsum(noise, axis=0)])
    return DiscretePath(spec.grid, values)


def sample_bm(spec):
    rng = make_rng(spec.seed)
    grid = spec.grid
    steps = rng.standard_normal((spec.N, spec.d)) * np.sqrt(np.diff(grid.times))[:, None]
    return DiscretePath(grid, np.concatenate([np.zeros((1, spec.d)), np.cumsum(steps, axis=0)]))


def default_area_matrix(d):
    A = np.zeros((d, d))
    A[0, 1], A[1, 0] = 1.0, -1.0
    return A


def pure_area(A, c, grid, p=2.5):
    """
    Non-geometric rough path with vanishing first level and level 2 equal to c (t - s) A.

    Parameters:
    - A (array-like): Antisymmetric d x d matrix.
    - c (float): Area rate.
    - grid (Grid): Time grid.
    - p (float): Regularity index, 2 <= p < 3 for rough use.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, -A.T, rtol=0.0, atol=1e-14):
        raise ConfigError("The area matrix of a pure-area driver must be square and antisymmetric.")
    d = A.shape[0]
    dt = np.diff(grid.times)
    return RoughPath(grid, np.zeros(d), np.zeros((grid.N, d)), c * dt[:, None, None] * A, p)


def smooth_path(spec):
    """
    Evaluates a closed-form smooth driver on the grid of the spec.

    smooth-sin: component a is amp * sin(2 pi freq (a + 1) t).
    smooth-poly: component a is coef * t^(a + 1), so d = 2 gives (t, t^2).
    """
    t = spec.grid.times
    powers = np.arange(1, spec.d + 1)
    if spec.kind == "smooth-sin":
        amp = float(spec.params.get("amp", 1.0))
        freq = float(spec.params.get("freq", 1.0))
        values = amp * np.sin(2 * np.pi * freq * np.outer(t, powers))
    elif spec.kind == "smooth-poly":
        coef = float(spec.params.get("coef", 1.0))
        values = coef * t[:, None] ** powers[None, :]
    else:
        raise ConfigError(f"Driver kind '{spec.kind}' is not a closed-form smooth path.")
    return DiscretePath(spec.grid, values)


def driver_path(spec):
    if spec.kind == "fbm":
        return sample_fbm(spec)
    if spec.kind == "bm":
        return sample_bm(spec)
    if spec.kind == "pure-area":
        return DiscretePath(spec.grid, np.zeros((spec.N + 1, spec.d)))
    return smooth_path(spec)


def build_driver(spec, p, rough=False):
    """
    Builds the rough path of a driver spec.

    Parameters:
    - spec (DriverSpec): The driver.
    - p (float): Regularity index of the lift.
    - rough (bool): Whether the lift feeds the rough solver; fBm then needs H > 1/3.

    Returns:
    - RoughPath: Piecewise-linear lift, or the pure-area rough path.
    """
    if spec.kind == "pure-area":
        A = spec.params.get("A")
        A = default_area_matrix(spec.d) if A is None else np.array(A, dtype=float).reshape(spec.d, spec.d)
        return pure_area(A, float(spec.params.get("c", 1.0)), spec.grid, p)
    if rough and spec.kind in ("fbm", "bm") and spec.H <= 1.0 / 3.0:
        raise RegimeError(f"Rough solves with piecewise-linear fBm lifts need H > 1/3, got H = {spec.H}.")
    return lift_piecewise_linear(driver_path(spec), p)
