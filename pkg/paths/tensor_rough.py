# paths/tensor_rough.py

import logging
from collections import namedtuple
from functools import reduce

import numpy as np

from calculus.young import cross_step_integrals
from errors import DimensionMismatchError, RegimeError, YoungConditionError
from paths.grid_control import DIFFERENCE_CONTROL, DiscretePath, safe_ratio, scan_pairs

RoughNorm = namedtuple('RoughNorm', ['value', 'level1', 'level2'])


class Tensor2:
    """
    Element 1 + v + M of the level-2 truncated tensor group over R^d.
    No symmetry is imposed on M, so non-geometric elements are allowed.
    """
    __slots__ = ('level1', 'level2')

    def __init__(self, level1, level2=None):
        level1 = np.array(level1, dtype=float).reshape(-1)
        d = level1.size
        level2 = np.zeros((d, d)) if level2 is None else np.array(level2, dtype=float)
        if level2.shape != (d, d):
            raise DimensionMismatchError(f"Level 2 must have shape {(d, d)}, got {level2.shape}.")
        self.level1 = level1
        self.level2 = level2

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.zeros((d, d)))

    @property
    def d(self):
        return self.level1.size

    def __mul__(self, other):
        return tensor_mul(self, other)

    def inverse(self):
        return tensor_inv(self)

    def distance(self, other):
        return float(max(np.max(np.abs(self.level1 - other.level1), initial=0.0),
                         np.max(np.abs(self.level2 - other.level2), initial=0.0)))

    def __repr__(self):
        return f"Tensor2(level1={self.level1.tolist()}, level2={self.level2.tolist()})"


def tensor_mul(a, b):
    """
    Truncated tensor product (v, M)(v', M') = (v + v', M + M' + v (x) v').
    """
    if a.d != b.d:
        raise DimensionMismatchError(f"Cannot multiply tensors of dimensions {a.d} and {b.d}.")
    return Tensor2(a.level1 + b.level1, a.level2 + b.level2 + np.outer(a.level1, b.level1))


def tensor_inv(a):
    return Tensor2(-a.level1, -a.level2 + np.outer(a.level1, a.level1))


class RoughPath:
    """
    Level-2 rough path on a grid, stored as one Tensor2 per consecutive step.

    Every other increment is the Chen composition of the steps in between, so Chen's relation holds by
    construction. Increments loaded from files may be kept in `stored_increments` for validation only.
    """
    def __init__(self, grid, start, lvl1, lvl2, p, omega=None, stored_increments=None):
        lvl1 = np.array(lvl1, dtype=float)
        lvl2 = np.array(lvl2, dtype=float)
        if lvl1.ndim != 2 or lvl1.shape[0] != grid.N:
            raise DimensionMismatchError(f"Expected {grid.N} level-1 steps, got shape {lvl1.shape}.")
        d = lvl1.shape[1]
        if lvl2.shape != (grid.N, d, d):
            raise DimensionMismatchError(f"Expected level-2 steps of shape {(grid.N, d, d)}, got {lvl2.shape}.")
        if not 1 <= p < 3:
            raise RegimeError(f"Rough paths are supported for 1 <= p < 3, got p = {p}.")
        start = np.zeros(d) if start is None else np.array(start, dtype=float).reshape(-1)
        if start.size != d:
            raise DimensionMismatchError(f"Start point has dimension {start.size}, steps have {d}.")
        for arr in (lvl1, lvl2, start):
            arr.setflags(write=False)
        self.grid = grid
        self.start = start
        self.lvl1 = lvl1
        self.lvl2 = lvl2
        self.p = float(p)
        self.omega = omega or DIFFERENCE_CONTROL
        self.stored_increments = dict(stored_increments or {})

        # Prefix increments x_{0,t_k}, used for vectorised scans
        self._X = np.concatenate([np.zeros((1, d)), np.cumsum(lvl1, axis=0)])
        self._S = np.concatenate([
            np.zeros((1, d, d)),
            np.cumsum(lvl2 + np.einsum('ka,kb->kab', self._X[:-1], lvl1), axis=0),
        ])

    @property
    def d(self):
        return self.lvl1.shape[1]

    @property
    def N(self):
        return self.grid.N

    def step(self, k):
        return Tensor2(self.lvl1[k], self.lvl2[k])

    def increment(self, i, j):
        """
        Chen composition of the step increments from t_i to t_j.

        Parameters:
        - i (int): Left grid index.
        - j (int): Right grid index, i <= j.

        Returns:
        - Tensor2: x_{t_i, t_j}; the identity when i == j.
        """
        if not 0 <= i <= j <= self.N:
            raise IndexError(f"Increment indices ({i}, {j}) out of range for N = {self.N}.")
        return reduce(tensor_mul, (self.step(k) for k in range(i, j)), Tensor2.identity(self.d))

    def level1_increments(self, ii, jj):
        return self._X[jj] - self._X[ii]

    def level2_increments(self, ii, jj):
        dx = self._X[jj] - self._X[ii]
        return self._S[jj] - self._S[ii] - np.einsum('na,nb->nab', self._X[ii], dx)

    def path(self):
        return DiscretePath(self.grid, self.start + self._X)

    def restrict(self, i, j):
        return RoughPath(self.grid.restrict(i, j), self.start + self._X[i], self.lvl1[i:j], self.lvl2[i:j],
                         self.p, self.omega)

    def with_steps(self, lvl1, lvl2, start=None):
        return RoughPath(self.grid, self.start if start is None else start, lvl1, lvl2, self.p, self.omega)

    def __repr__(self):
        return f"RoughPath(N={self.N}, d={self.d}, p={self.p})"


def increment(X, i, j):
    return X.increment(i, j)


def rough_norm(X, scan_limit=None):
    """
    ||x||_p := max(sup |x1_{s,t}| / w^{1/p}, sup (|x2_{s,t}| / w^{2/p})^{1/2}) over grid pairs.

    Returns:
    - RoughNorm: (value, level1, level2).
    """
    t = X.grid.times
    p = X.p

    def level1_ratio(ii, jj):
        num = np.linalg.norm(X.level1_increments(ii, jj), axis=1)
        return safe_ratio(num, X.omega(t[ii], t[jj]) ** (1.0 / p))

    def level2_ratio(ii, jj):
        num = np.sqrt(np.linalg.norm(X.level2_increments(ii, jj), axis=(1, 2)))
        return safe_ratio(num, X.omega(t[ii], t[jj]) ** (1.0 / p))

    n1 = scan_pairs(X.grid, level1_ratio, scan_limit)
    n2 = scan_pairs(X.grid, level2_ratio, scan_limit)
    return RoughNorm(value=max(n1, n2), level1=n1, level2=n2)


def dilate(X, eps):
    return X.with_steps(eps * X.lvl1, eps * eps * X.lvl2)


def translate(X, h, q):
    """
    Translation x(h) of a rough path by a path h of finite q-variation, pi(x(h)) = pi(x) + h.

    Parameters:
    - X (RoughPath): The rough path.
    - h (DiscretePath): Perturbation on the same grid, valued in R^d.
    - q (float): Variation index of h; 1/p + 1/q > 1 is required.

    Returns:
    - RoughPath: Level 1 x1 + h_{s,t}; level 2 completed with the cross integrals of h and x per step.
    """
    if 1.0 / X.p + 1.0 / q <= 1.0:
        raise YoungConditionError(f"Translation needs 1/p + 1/q > 1, got p = {X.p}, q = {q}.")
    if not X.grid.same_as(h.grid):
        raise DimensionMismatchError("The translation path must live on the rough path's grid.")
    if h.value_shape != (X.d,):
        raise DimensionMismatchError(f"Translation path must be valued in R^{X.d}, got {h.value_shape}.")
    dh = np.diff(h.values, axis=0)
    lvl2 = X.lvl2 + cross_step_integrals(dh, X.lvl1) + cross_step_integrals(X.lvl1, dh) \
        + cross_step_integrals(dh, dh)
    return X.with_steps(X.lvl1 + dh, lvl2, start=X.start + h.values[0])


def chen_defect(X):
    """
    Largest discrepancy between stored redundant increments and the Chen composition of steps.
    Paths built in memory carry no redundant increments, so their defect is 0.
    """
    worst = 0.0
    for (i, j), stored in X.stored_increments.items():
        worst = max(worst, stored.distance(X.increment(i, j)))
    if worst > 0:
        logging.info(f"Chen defect over {len(X.stored_increments)} stored increments: {worst:.3e}")
    return worst


def geometric_defect(X):
    """
    max over steps of |Sym(x2) - 1/2 x1 (x) x1|; zero up to rounding for lifts of smooth paths.
    """
    sym = 0.5 * (X.lvl2 + np.swapaxes(X.lvl2, 1, 2))
    half_square = 0.5 * np.einsum('ka,kb->kab', X.lvl1, X.lvl1)
    return float(np.max(np.abs(sym - half_square), initial=0.0))
