# paths/grid_control.py

import logging
from collections import namedtuple

import numpy as np

from config import Config
from errors import DimensionMismatchError, InvalidGridError, RegimeError

EmbeddingCheck = namedtuple('EmbeddingCheck', ['holds', 'slack'])


def make_rng(seed):
    """
    Builds the counter-based generator used everywhere in the toolkit (Philox).

    Parameters:
    - seed (int): 64-bit seed.

    Returns:
    - numpy.random.Generator: A reproducible generator.
    """
    return np.random.Generator(np.random.Philox(int(seed)))


class Grid:
    """
    Ordered time instants t_0 < t_1 < ... < t_N discretising [t_0, T].
    Grids built by the constructors start at 0; restricted windows keep their absolute times.
    """
    def __init__(self, times):
        times = np.array(times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidGridError(f"A grid needs at least two instants, got shape {times.shape}.")
        if not np.all(np.diff(times) > 0):
            raise InvalidGridError("Grid instants must be strictly increasing.")
        times.setflags(write=False)
        self.times = times

    @classmethod
    def uniform(cls, N, T=1.0):
        if N < 1:
            raise InvalidGridError(f"N must be at least 1, got {N}.")
        return cls(np.linspace(0.0, T, N + 1))

    @classmethod
    def dyadic(cls, m, T=1.0):
        return cls.uniform(2 ** m, T)

    @property
    def N(self):
        return self.times.size - 1

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def start(self):
        return float(self.times[0])

    def refine(self, factor=2):
        """
        Inserts factor - 1 equally spaced instants inside every step.
        The refined grid contains all original instants.
        """
        steps = np.diff(self.times)
        inner = self.times[:-1, None] + steps[:, None] * (np.arange(factor) / factor)
        return Grid(np.append(inner.ravel(), self.times[-1]))

    def restrict(self, i, j):
        if not 0 <= i < j <= self.N:
            raise InvalidGridError(f"Cannot restrict grid of size {self.N} to [{i}, {j}].")
        return Grid(self.times[i:j + 1])

    def contains(self, other):
        return bool(np.all(np.isin(other.times, self.times)))

    def same_as(self, other):
        return self is other or (self.times.shape == other.times.shape and np.array_equal(self.times, other.times))

    def __len__(self):
        return self.times.size

    def __repr__(self):
        return f"Grid(N={self.N}, t0={self.start}, T={self.T})"


class ControlFn:
    """
    Super-additive control omega(s, t) >= 0 on intervals. The evaluator must accept numpy arrays.
    """
    def __init__(self, evaluator=None, kind=None):
        if evaluator is None:
            self.evaluator = lambda s, t: np.subtract(t, s)
            self.kind = "difference"
        else:
            self.evaluator = evaluator
            self.kind = kind or "user"

    def __call__(self, s, t):
        return np.asarray(self.evaluator(s, t), dtype=float)

    def total(self, grid):
        return float(self(grid.times[0], grid.times[-1]))

    def validate(self, grid, n_triples=10_000, seed=0):
        """
        Samples triples r <= s <= t in the grid horizon and measures the worst breach of
        super-additivity and of omega(t, t) = 0.

        Parameters:
        - grid (Grid): Horizon to sample from.
        - n_triples (int): Number of random triples.
        - seed (int): Generator seed.

        Returns:
        - float: max(omega(r,s) + omega(s,t) - omega(r,t), |omega(t,t)|); <= 0 up to rounding when valid.
        """
        rng = make_rng(seed)
        pts = np.sort(rng.uniform(grid.start, grid.T, size=(n_triples, 3)), axis=1)
        r, s, t = pts[:, 0], pts[:, 1], pts[:, 2]
        breach = self(r, s) + self(s, t) - self(r, t)
        diagonal = np.abs(self(t, t))
        worst = float(max(breach.max(), diagonal.max()))
        if worst > 1e-12:
            logging.warning(f"Control '{self.kind}' breaches super-additivity by {worst:.3e}.")
        return worst


DIFFERENCE_CONTROL = ControlFn()


class DiscretePath:
    """
    Values of a path on a grid. values has shape (N + 1, *value_shape); a 1-D input is read as a scalar path.
    """
    def __init__(self, grid, values):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(grid):
            raise DimensionMismatchError(
                f"Path has {values.shape[0]} values but the grid has {len(grid)} instants.")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @property
    def value_shape(self):
        return self.values.shape[1:]

    @property
    def d(self):
        return int(np.prod(self.value_shape, dtype=int))

    @property
    def flat_values(self):
        return self.values.reshape(self.values.shape[0], -1)

    @property
    def start(self):
        return self.values[0]

    def increment(self, i, j):
        return self.values[j] - self.values[i]

    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.flat_values, axis=1)))

    def restrict(self, i, j):
        return DiscretePath(self.grid.restrict(i, j), self.values[i:j + 1])

    def map_values(self, fn):
        return DiscretePath(self.grid, fn(self.values))

    def _check_compatible(self, other):
        if not self.grid.same_as(other.grid):
            raise DimensionMismatchError("Paths live on different grids.")
        if self.value_shape != other.value_shape:
            raise DimensionMismatchError(f"Value shapes differ: {self.value_shape} vs {other.value_shape}.")

    def __add__(self, other):
        self._check_compatible(other)
        return DiscretePath(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check_compatible(other)
        return DiscretePath(self.grid, self.values - other.values)

    def __neg__(self):
        return DiscretePath(self.grid, -self.values)

    def __mul__(self, scalar):
        return DiscretePath(self.grid, float(scalar) * self.values)

    __rmul__ = __mul__

    def __repr__(self):
        return f"DiscretePath(N={self.grid.N}, value_shape={self.value_shape})"


def safe_ratio(num, denom):
    """
    num / denom with the convention 0/0 = 0 and x/0 = inf for x > 0 (infinite-norm signal).
    """
    num = np.asarray(num, dtype=float)
    denom = np.broadcast_to(np.asarray(denom, dtype=float), num.shape)
    out = np.zeros_like(num)
    pos = denom > 0
    out[pos] = num[pos] / denom[pos]
    out[~pos & (num > 0)] = np.inf
    return out


def iter_pair_blocks(N, scan_limit=None):
    """
    Yields index blocks (ii, jj) with ii < jj covering the pairs to scan on a grid of size N.
    All O(N^2) pairs when N <= scan_limit, otherwise the dyadic pairs (i, i + 2^k) plus (0, N).
    """
    limit = Config.EXACT_SCAN_LIMIT if scan_limit is None else scan_limit
    if N <= limit:
        for i in range(N):
            jj = np.arange(i + 1, N + 1)
            yield np.full(jj.size, i), jj
        return
    logging.debug(f"Grid size {N} above scan limit {limit}: dyadic pairs only, result is a lower bound.")
    step = 1
    while step <= N:
        ii = np.arange(0, N + 1 - step)
        yield ii, ii + step
        step *= 2
    yield np.array([0]), np.array([N])


def scan_pairs(grid, ratio, scan_limit=None):
    """
    Supremum over grid pairs of a ratio.

    Parameters:
    - grid (Grid): The grid to scan.
    - ratio (callable): ratio(ii, jj) -> array of non-negative values for the pairs (t_ii, t_jj).
    - scan_limit (int, optional): Exact-scan threshold, defaults to Config.EXACT_SCAN_LIMIT.

    Returns:
    - float: The maximum ratio; inf if some pair has zero control and nonzero increment.
    """
    best = 0.0
    for ii, jj in iter_pair_blocks(grid.N, scan_limit):
        values = ratio(ii, jj)
        if values.size:
            best = max(best, float(np.max(values)))
    if np.isinf(best):
        logging.warning("Pair scan hit a zero control with a nonzero increment: norm is infinite.")
    return best


def sample_triples(N, n, seed=0):
    """
    Random grid triples r < s < t with t - r = 2^k steps and s the midpoint, k spread over all scales.

    Returns:
    - numpy.ndarray: Integer array of shape (n, 3), empty when N < 2.
    """
    if N < 2:
        return np.zeros((0, 3), dtype=int)
    rng = make_rng(seed)
    max_k = int(np.floor(np.log2(N)))
    lengths = 2 ** rng.integers(1, max_k + 1, size=n)
    r = np.floor(rng.random(n) * (N - lengths + 1)).astype(int)
    return np.stack([r, r + lengths // 2, r + lengths], axis=1)


def pvar_norm(x, p, omega=None, scan_limit=None):
    """
    Grid-restricted p-variation seminorm sup |x_{s,t}| / omega(s,t)^{1/p}.

    Parameters:
    - x (DiscretePath): The path.
    - p (float): Variation index, p >= 1.
    - omega (ControlFn, optional): Control, defaults to omega(s,t) = t - s.
    - scan_limit (int, optional): Exact-scan threshold.

    Returns:
    - float: The seminorm (a lower bound on the dyadic subsample above the scan limit).
    """
    if p < 1:
        raise RegimeError(f"p-variation needs p >= 1, got {p}.")
    omega = omega or DIFFERENCE_CONTROL
    vals = x.flat_values
    t = x.grid.times

    def ratio(ii, jj):
        num = np.linalg.norm(vals[jj] - vals[ii], axis=1)
        return safe_ratio(num, omega(t[ii], t[jj]) ** (1.0 / p))

    return scan_pairs(x.grid, ratio, scan_limit)


def full_norm(x, p, omega=None, scan_limit=None):
    return float(np.linalg.norm(x.flat_values[0])) + pvar_norm(x, p, omega, scan_limit)


def sup_embedding_check(x, p, omega=None, scan_limit=None):
    """
    Checks sup_t |x_t| <= |x_0| + ||x||_p omega(0,T)^{1/p}.

    Returns:
    - EmbeddingCheck: (holds, slack) with slack = right-hand side minus left-hand side.
    """
    omega = omega or DIFFERENCE_CONTROL
    rhs = float(np.linalg.norm(x.flat_values[0])) \
        + pvar_norm(x, p, omega, scan_limit) * omega.total(x.grid) ** (1.0 / p)
    slack = rhs - x.sup_norm()
    return EmbeddingCheck(holds=bool(slack >= -1e-12 * max(1.0, rhs)), slack=slack)
