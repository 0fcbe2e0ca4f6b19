# calculus/sewing.py

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from config import Config
from errors import DimensionMismatchError, InsufficientDataError
from paths.grid_control import DIFFERENCE_CONTROL, DiscretePath, sample_triples

# Germ sums at or above this length use compensated summation
COMPENSATED_SUM_THRESHOLD = 2 ** 14
DEFECT_FLOOR = 1e-14


def ordered_cumsum(values):
    """
    Prefix sums in grid order, starting from 0. Kahan-compensated for long grids.

    Parameters:
    - values (numpy.ndarray): Array of shape (N, *shape).

    Returns:
    - numpy.ndarray: Array of shape (N + 1, *shape) with out[0] = 0.
    """
    values = np.asarray(values, dtype=float)
    out = np.zeros((values.shape[0] + 1,) + values.shape[1:])
    if values.shape[0] < COMPENSATED_SUM_THRESHOLD:
        np.cumsum(values, axis=0, out=out[1:])
        return out
    total = np.zeros(values.shape[1:])
    comp = np.zeros(values.shape[1:])
    for k in range(values.shape[0]):
        y = values[k] - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[k + 1] = total
    return out


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    constant: float
    r2: float
    residual: float
    n: int

    @property
    def flagged(self):
        return self.r2 < Config.FIT_R2_MIN

    def to_dict(self):
        return {"slope": self.slope, "constant": self.constant, "r2": self.r2, "residual": self.residual,
                "n": self.n, "flagged": self.flagged}


def fit_exponent(scales, values):
    """
    Ordinary least squares of log(values) against log(scales).

    Parameters:
    - scales (array-like): Positive abscissae (control values, perturbation sizes).
    - values (array-like): Positive responses.

    Returns:
    - ExponentFit: slope, exp(intercept), r^2, RMS residual and sample count.
    """
    x = np.log(np.asarray(scales, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if x.size < 2 or np.ptp(x) == 0:
        raise InsufficientDataError(f"Need at least two distinct scales to fit an exponent, got {x.size}.")
    fit = linregress(x, y)
    residual = float(np.sqrt(np.mean((y - (fit.intercept + fit.slope * x)) ** 2)))
    return ExponentFit(slope=float(fit.slope), constant=float(np.exp(fit.intercept)),
                       r2=float(fit.rvalue ** 2), residual=residual, n=int(x.size))


class AdditiveGerm:
    """
    Two-parameter germ Xi_{t_i, t_j} with claimed regularity exponent theta > 1.

    Parameters:
    - evaluate (callable): evaluate(i, j) -> numpy.ndarray.
    - theta (float): Claimed exponent of the coherence defect.
    - omega (ControlFn, optional): Control, defaults to t - s.
    - steps (callable, optional): steps() -> array (N, *shape) of all consecutive-step values at once.
    """
    def __init__(self, evaluate, theta, omega=None, steps=None):
        self.evaluate = evaluate
        self.theta = float(theta)
        self.omega = omega or DIFFERENCE_CONTROL
        self._steps = steps

    def step_values(self, grid):
        if self._steps is not None:
            return np.asarray(self._steps(), dtype=float)
        return np.stack([np.asarray(self.evaluate(k, k + 1), dtype=float) for k in range(grid.N)])

    def defect(self, r, s, t):
        return float(np.linalg.norm(self.evaluate(r, t) - self.evaluate(r, s) - self.evaluate(s, t)))


class IncrementFamily:
    """
    Exactly additive family I_{t_i, t_j} = P_j - P_i built from prefix sums of step germs.
    """
    def __init__(self, grid, prefix):
        self.grid = grid
        self.prefix = prefix

    def __call__(self, i, j):
        return self.prefix[j] - self.prefix[i]

    def increments(self, ii, jj):
        return self.prefix[jj] - self.prefix[ii]

    def path(self, start=None):
        values = self.prefix if start is None else self.prefix + np.asarray(start, dtype=float)
        return DiscretePath(self.grid, values)

    def additivity_defect(self, triples):
        r, s, t = triples[:, 0], triples[:, 1], triples[:, 2]
        gap = self.increments(r, t) - self.increments(r, s) - self.increments(s, t)
        return float(np.max(np.abs(gap), initial=0.0))

    def measure_bound(self, germ, n_pairs=200, seed=0):
        """
        Measured constant K in |I_{s,t} - Xi_{s,t}| <= K omega(s,t)^theta over sampled pairs.
        """
        t = self.grid.times
        worst = 0.0
        for r, _, u in sample_triples(self.grid.N, n_pairs, seed):
            w = float(germ.omega(t[r], t[u]))
            if w <= 0:
                continue
            gap = np.linalg.norm(self(r, u) - germ.evaluate(r, u))
            worst = max(worst, gap / w ** germ.theta)
        return worst


def sew_additive(germ, grid):
    """
    Sews an additive germ on a grid: I_{t_i, t_j} is the germ sum over the finest mesh between t_i and t_j.

    Parameters:
    - germ (AdditiveGerm): The germ.
    - grid (Grid): The grid.

    Returns:
    - IncrementFamily: Exactly additive over the grid.
    """
    steps = germ.step_values(grid)
    if steps.shape[0] != grid.N:
        raise DimensionMismatchError(f"Germ produced {steps.shape[0]} steps for a grid with {grid.N}.")
    return IncrementFamily(grid, ordered_cumsum(steps))


@dataclass(frozen=True)
class MonoidElem:
    """
    Element (a, b, c) of W = U + V + (U (x) V) with the product
    (a, b, c) [x] (a', b', c') = (a + a', b + b', c + c' + a (x) b').
    """
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def boxtimes(self, other):
        return monoid_mul(self, other)

    def norm(self):
        return float(max(np.linalg.norm(self.a), np.linalg.norm(self.b), np.linalg.norm(self.c)))

    def distance(self, other):
        return MonoidElem(self.a - other.a, self.b - other.b, self.c - other.c).norm()


def monoid_mul(x, y):
    if x.a.shape != y.a.shape or x.b.shape != y.b.shape:
        raise DimensionMismatchError("Monoid elements have mismatched components.")
    return MonoidElem(x.a + y.a, x.b + y.b, x.c + y.c + np.multiply.outer(x.a, y.b))


class MultiplicativeGerm:
    """
    Germ phi_{t_i, t_j} valued in the monoid W.

    Parameters:
    - evaluate (callable): evaluate(i, j) -> MonoidElem.
    - theta (float): Claimed exponent.
    - omega (ControlFn, optional): Control.
    - steps (callable, optional): steps() -> (A, B, C) arrays of shapes (N, dU), (N, *V), (N, dU, *V).
    """
    def __init__(self, evaluate, theta, omega=None, steps=None):
        self.evaluate = evaluate
        self.theta = float(theta)
        self.omega = omega or DIFFERENCE_CONTROL
        self._steps = steps

    def step_values(self, grid):
        if self._steps is not None:
            return tuple(np.asarray(part, dtype=float) for part in self._steps())
        elems = [self.evaluate(k, k + 1) for k in range(grid.N)]
        return (np.stack([e.a for e in elems]), np.stack([e.b for e in elems]), np.stack([e.c for e in elems]))

    def defect(self, r, s, t):
        return self.evaluate(r, s).boxtimes(self.evaluate(s, t)).distance(self.evaluate(r, t))


class MultiplicativeFamily:
    """
    Exactly multiplicative family Y_{t_i, t_j} = P_i^{-1} [x] P_j from the prefix products P of step germs.
    """
    def __init__(self, grid, A, B, C):
        self.grid = grid
        self.A = A
        self.B = B
        self.C = C

    def c_increments(self, ii, jj):
        return self.C[jj] - self.C[ii] - np.einsum('na,n...->na...', self.A[ii], self.B[jj] - self.B[ii])

    def __call__(self, i, j):
        ii, jj = np.array([i]), np.array([j])
        return MonoidElem(self.A[j] - self.A[i], self.B[j] - self.B[i], self.c_increments(ii, jj)[0])

    def multiplicativity_defect(self, triples):
        worst = 0.0
        for r, s, t in triples:
            worst = max(worst, self(r, s).boxtimes(self(s, t)).distance(self(r, t)))
        return worst

    def measure_bound(self, germ, n_pairs=200, seed=0):
        t = self.grid.times
        worst = 0.0
        for r, _, u in sample_triples(self.grid.N, n_pairs, seed):
            w = float(germ.omega(t[r], t[u]))
            if w > 0:
                worst = max(worst, self(r, u).distance(germ.evaluate(r, u)) / w ** germ.theta)
        return worst


def sew_multiplicative(germ, grid):
    """
    Sews a multiplicative germ: Y_{t_i, t_j} is the ordered [x]-product of the step germs from t_i to t_j.

    Returns:
    - MultiplicativeFamily: Exactly [x]-multiplicative over the grid.
    """
    a, b, c = germ.step_values(grid)
    if a.shape[0] != grid.N or b.shape[0] != grid.N or c.shape[0] != grid.N:
        raise DimensionMismatchError("Germ step arrays do not match the grid size.")
    if c.shape[1:] != a.shape[1:] + b.shape[1:]:
        raise DimensionMismatchError(
            f"Germ c-component has shape {c.shape[1:]}, expected {a.shape[1:] + b.shape[1:]}.")
    A = ordered_cumsum(a)
    B = ordered_cumsum(b)
    C = ordered_cumsum(c + np.einsum('ka,k...->ka...', A[:-1], b))
    return MultiplicativeFamily(grid, A, B, C)


@dataclass(frozen=True)
class DefectReport:
    C_hat: float
    theta_hat: float
    n_triples: int
    residual: float
    identifiable: bool

    def to_dict(self):
        return {"C_hat": self.C_hat, "theta_hat": self.theta_hat, "n_triples": self.n_triples,
                "residual": self.residual}


def defect_scan(germ, grid, triples=None, n_triples=200, seed=0):
    """
    Fits |defect_{r,s,t}| ~ C_hat * omega(r,t)^theta_hat over sampled triples.

    Parameters:
    - germ (AdditiveGerm | MultiplicativeGerm): Germ to probe.
    - grid (Grid): The grid.
    - triples (numpy.ndarray, optional): Index triples r < s < t; sampled across scales when omitted.
    - n_triples (int): Sample size when triples is omitted.
    - seed (int): Sampling seed.

    Returns:
    - DefectReport: theta_hat is nan and identifiable False when defects sit below the floor.
    """
    triples = sample_triples(grid.N, n_triples, seed) if triples is None else np.asarray(triples)
    if len(triples) < 3:
        raise InsufficientDataError(f"defect_scan needs at least 3 triples, got {len(triples)}.")
    t = grid.times
    scales, defects = [], []
    for r, s, u in triples:
        w = float(germ.omega(t[r], t[u]))
        value = germ.defect(r, s, u)
        if w > 0 and value > DEFECT_FLOOR:
            scales.append(w)
            defects.append(value)
    if len(defects) < 3 or np.ptp(np.log(scales)) == 0:
        logging.info(f"Defects below {DEFECT_FLOOR} on {len(triples)} triples: exponent not identifiable.")
        return DefectReport(C_hat=0.0, theta_hat=float('nan'), n_triples=len(triples), residual=0.0,
                            identifiable=False)
    fit = fit_exponent(scales, defects)
    logging.debug(f"Sewing defect fit: theta_hat={fit.slope:.3f}, C_hat={fit.constant:.3e}, r2={fit.r2:.4f}")
    return DefectReport(C_hat=fit.constant, theta_hat=fit.slope, n_triples=len(triples),
                        residual=fit.residual, identifiable=True)
