# solvers/rde.py

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from calculus.crp import ControlledPath, canonical_crp, crp_integral, crp_norms, crp_omega, x_full_norm
from calculus.hoelder_fields import omega_map
from calculus.sewing import fit_exponent
from calculus.young import young_integral
from config import Config
from errors import (ConfigError, DimensionMismatchError, DivergenceError, InsufficientDataError, RegimeError,
                    YoungConditionError)
from paths.grid_control import DIFFERENCE_CONTROL, DiscretePath, full_norm, pvar_norm
from paths.tensor_rough import dilate, rough_norm


@dataclass
class SolveSpec:
    """
    Solver settings. a and b are optional defaults for the initial point and the additive forcing;
    explicit solver arguments take precedence.
    """
    a: object = None
    b: object = None
    tol: float = Config.TOL
    max_iter: int = Config.MAX_ITER
    split_policy: str = "halve"
    stack: bool = True
    safety: float = Config.SAFETY
    sewing_constant: float = Config.SEWING_CONSTANT
    young_order: int = 2
    kappa: float = Config.KAPPA
    scan_limit: int = Config.RESIDUAL_SCAN_LIMIT
    min_window: int = 2

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"Solver tolerance must be positive, got {self.tol}.")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}.")
        if self.split_policy != "halve":
            raise ConfigError(f"Unknown split policy '{self.split_policy}'.")
        if self.young_order not in (1, 2):
            raise ConfigError(f"young_order must be 1 or 2, got {self.young_order}.")

    def with_tol(self, tol):
        return SolveSpec(**{**self.__dict__, "tol": tol})


@dataclass(frozen=True)
class WindowReport:
    t0: float
    t1: float
    i0: int
    i1: int
    iters: int
    residual: float
    factor: float
    worst_ratio: float

    def to_dict(self):
        return {"t0": self.t0, "t1": self.t1, "iters": self.iters, "residual": self.residual}


@dataclass
class Solution:
    """
    Output of a solve: a ControlledPath in the rough regime, a DiscretePath in the Young regime.
    """
    y: object
    windows: list = field(default_factory=list)
    regime: str = "rough"

    @property
    def path(self):
        return self.y.y if isinstance(self.y, ControlledPath) else self.y

    @property
    def yT(self):
        return self.path.values[-1]

    @property
    def iterations(self):
        return [w.iters for w in self.windows]

    @property
    def residuals(self):
        return [w.residual for w in self.windows]

    def at(self, t_idx):
        return self.path.values[t_idx]

    def to_report(self, scan_limit=None, p=None):
        scan_limit = Config.RESIDUAL_SCAN_LIMIT if scan_limit is None else scan_limit
        if isinstance(self.y, ControlledPath):
            norms = crp_norms(self.y, scan_limit).to_dict()
        else:
            norms = {"full": full_norm(self.y, p or 1.0, scan_limit=scan_limit), "sup": self.y.sup_norm()}
        return {"regime": self.regime, "windows": [w.to_dict() for w in self.windows],
                "yT": self.yT.tolist(), "norms": norms}


def evaluate(solution, t_idx):
    return solution.at(t_idx)


class _WindowFailure(Exception):
    def __init__(self, history):
        super().__init__(f"Picard iteration failed after {len(history)} iterations.")
        self.history = history


def _picard(step, residual, state, spec):
    """
    Runs state -> step(state) until the residual drops below tol.
    Fails on non-finite residuals, on growth after the third iteration, or when max_iter is reached.
    """
    history = []
    for it in range(1, spec.max_iter + 1):
        new = step(state)
        res = residual(new, state)
        history.append(res)
        state = new
        if res <= spec.tol:
            return state, history
        if not np.isfinite(res) or (it >= 3 and res > history[-2]):
            break
    raise _WindowFailure(history)


def _worst_ratio(history):
    ratios = [b / a for a, b in zip(history[1:-1], history[2:]) if a > 0]
    return float(max(ratios)) if ratios else 0.0


def _stack_windows(N, times, state, solve_window, factor_fn, terminal, spec, label):
    """
    Covers [t_0, t_N] with abutting windows, each solved by a Picard iteration started at the terminal
    state of the previous one. Windows are sized so the contraction estimate stays below spec.safety and
    halved when the iteration fails.
    """
    windows, pieces = [], []
    i0 = 0
    while i0 < N:
        length = N - i0
        factor = factor_fn(i0, i0 + length, state)
        if spec.stack:
            while length > spec.min_window and factor >= spec.safety:
                length = min(max(length // 2, spec.min_window), N - i0)
                factor = factor_fn(i0, i0 + length, state)
            if factor >= spec.safety:
                logging.warning(f"{label}: contraction estimate {factor:.3g} above {spec.safety} on the "
                                f"smallest window at t = {times[i0]:.6g}.")
        while True:
            i1 = i0 + length
            try:
                result, history = solve_window(i0, i1, state)
                break
            except _WindowFailure as exc:
                if not spec.stack or length <= spec.min_window:
                    raise DivergenceError(
                        f"{label}: Picard iteration diverged on [{times[i0]:.6g}, {times[i1]:.6g}] "
                        f"(residuals {exc.history[-3:]}).") from exc
                length = min(max(length // 2, spec.min_window), N - i0)
                logging.info(f"{label}: halving window at t = {times[i0]:.6g} to {length} steps.")
                factor = factor_fn(i0, i0 + length, state)
        windows.append(WindowReport(t0=float(times[i0]), t1=float(times[i1]), i0=i0, i1=i1, iters=len(history),
                                    residual=float(history[-1]), factor=float(factor),
                                    worst_ratio=_worst_ratio(history)))
        logging.debug(f"{label}: window [{times[i0]:.6g}, {times[i1]:.6g}] converged in {len(history)} "
                      f"iterations, residual {history[-1]:.3e}, estimate {factor:.3g}.")
        pieces.append(result)
        state = terminal(result)
        i0 = i1
    return windows, pieces


def _field_lipschitz(f, center):
    return f.sup_bound(1, center=center, radius=1.0 + float(np.linalg.norm(center)))


def _check_forcing(b, grid, n):
    if b is None:
        return np.zeros((len(grid), n))
    if not b.grid.same_as(grid) or b.value_shape != (n,):
        raise DimensionMismatchError("The forcing path must live on the driver grid and in the state space.")
    if np.any(b.values[0] != 0):
        logging.warning("Only increments of the forcing path enter the equation; its initial value is ignored.")
    return b.values - b.values[0]


def _young_step_fn(f, xw, p, omega, order, a, bw, g_term=None):
    n_pts = len(xw.grid)

    def step(y):
        path = DiscretePath(xw.grid, y)
        dag = None
        if order >= 2:
            dag = np.einsum('tiwb,tba->tiwa', f.jacobian(y), f(y))
        integral = young_integral(omega_map(f, path), xw, p, p, omega, integrand_dagger=dag)
        out = a + integral.values.reshape(n_pts, f.n) + bw
        if g_term is not None:
            out = out + g_term(path)
        return out

    return step


def solve_young(a, f, x, b=None, p=1.0, omega=None, spec=None):
    """
    Solves y_t = a + int_0^t f(y) dx + b_{0,t} for a driver of finite p-variation, 1 <= p < 2.

    Parameters:
    - a (array-like): Initial point in R^n.
    - f (VectorField): Field with k >= 1 and 1 + kappa gamma > p.
    - x (DiscretePath): Driver valued in R^d.
    - b (DiscretePath, optional): Additive forcing; only its increments matter.
    - p (float): Variation index of x.
    - omega (ControlFn, optional): Control.
    - spec (SolveSpec, optional): Solver settings.

    Returns:
    - Solution: DiscretePath solution with per-window iteration counts and residuals.
    """
    spec = spec or SolveSpec()
    omega = omega or DIFFERENCE_CONTROL
    a = np.asarray(spec.a if a is None else a, dtype=float).reshape(-1)
    b = spec.b if b is None else b
    if not 1 <= p < 2:
        raise RegimeError(f"The Young solver needs 1 <= p < 2, got p = {p}.")
    if f.k < 1:
        raise RegimeError(f"The Young solver needs a field with k >= 1, '{f.name}' has k = 0.")
    if not 1 + spec.kappa * f.gamma > p:
        raise RegimeError(f"Young regime needs 1 + kappa gamma > p, got {1 + spec.kappa * f.gamma:.4f} <= {p}.")
    if a.size != f.n or x.value_shape != (f.d,):
        raise DimensionMismatchError(f"Field '{f.name}' maps R^{f.n} x R^{f.d}; got a in R^{a.size} and "
                                     f"a driver valued in {x.value_shape}.")
    grid = x.grid
    forcing = _check_forcing(b, grid, f.n)
    K = spec.sewing_constant

    def factor_fn(i0, i1, state):
        xn = pvar_norm(x.restrict(i0, i1), p, omega, spec.scan_limit)
        return _field_lipschitz(f, state) * xn * float(omega(grid.times[i0], grid.times[i1])) ** (1 / p) * (1 + K)

    def solve_window(i0, i1, state):
        xw = x.restrict(i0, i1)
        bw = forcing[i0:i1 + 1] - forcing[i0]
        step = _young_step_fn(f, xw, p, omega, spec.young_order, state, bw)

        def residual(new, old):
            return pvar_norm(DiscretePath(xw.grid, new - old), p, omega, spec.scan_limit)

        start = np.broadcast_to(state, (i1 - i0 + 1, f.n)).copy()
        return _picard(step, residual, start, spec)

    windows, pieces = _stack_windows(grid.N, grid.times, a, solve_window, factor_fn, lambda y: y[-1],
                                     spec, "solve_young")
    values = np.concatenate([pieces[0]] + [piece[1:] for piece in pieces[1:]])
    return Solution(DiscretePath(grid, values), windows, regime="young")


def _check_rough_inputs(a, f, Z):
    if not 2 <= Z.p < 3:
        raise RegimeError(f"The rough solver needs 2 <= p < 3, got p = {Z.p}.")
    if f.k < 1:
        raise RegimeError(f"The rough solver needs a field with k >= 1, '{f.name}' has k = 0.")
    if a.size != f.n or Z.value_shape != (f.d,):
        raise DimensionMismatchError(f"Field '{f.name}' maps R^{f.n} x R^{f.d}; got a in R^{a.size} and "
                                     f"an integrator valued in {Z.value_shape}.")


def _rough_solve(a, bmat, f, Z, spec, label, young_term=None, extra_factor=None):
    """
    Windowed Picard iteration Y <- a + int f(Y) dZ + bmat Z_{0,.} (+ a Young term) on controlled paths.
    """
    spec = spec or SolveSpec()
    a = np.asarray(a, dtype=float).reshape(-1)
    _check_rough_inputs(a, f, Z)
    bmat = np.zeros((f.n, f.d)) if bmat is None else np.asarray(bmat, dtype=float).reshape(f.n, f.d)
    grid, X = Z.grid, Z.base
    p = Z.p
    K = spec.sewing_constant

    def factor_fn(i0, i1, state):
        xn = rough_norm(X.restrict(i0, i1), spec.scan_limit).value
        w = float(X.omega(grid.times[i0], grid.times[i1]))
        out = _field_lipschitz(f, state) * max(xn, xn ** 2) * w ** (1 / p) * (1 + K)
        if extra_factor is not None:
            out += extra_factor(i0, i1, state)
        return out

    def solve_window(i0, i1, state):
        Zw = Z.restrict(i0, i1)
        zv = Zw.y.values - Zw.y.values[0]
        zdag = Zw.ydag
        forcing = np.einsum('iw,tw->ti', bmat, zv)
        forcing_dag = np.einsum('iw,twu->tiu', bmat, zdag)
        n_pts = i1 - i0 + 1

        def step(Y):
            integral = crp_integral(crp_omega(f, Y, spec.kappa), Zw)
            value = state + integral.y.values.reshape(n_pts, f.n) + forcing
            if young_term is not None:
                value = value + young_term(Y.y, i0, i1)
            dag = integral.ydag.reshape(n_pts, f.n, X.d) + forcing_dag
            return ControlledPath(Zw.base, value, dag, p, p, p / 2)

        def residual(new, old):
            return x_full_norm(new - old, spec.scan_limit)

        start_dag = np.einsum('iw,twu->tiu', f(state) + bmat, zdag)
        start = ControlledPath(Zw.base, np.broadcast_to(state, (n_pts, f.n)), start_dag, p, p, p / 2)
        return _picard(step, residual, start, spec)

    windows, pieces = _stack_windows(grid.N, grid.times, a, solve_window, factor_fn,
                                     lambda Y: Y.y.values[-1], spec, label)
    values = np.concatenate([pieces[0].y.values] + [P.y.values[1:] for P in pieces[1:]])
    dags = np.concatenate([pieces[0].ydag] + [P.ydag[1:] for P in pieces[1:]])
    return Solution(ControlledPath(X, values, dags, p, p, p / 2), windows, regime="rough")


def solve_rough(a, bmat, f, Z, spec=None):
    """
    Solves y_t = a + int_0^t f(y) dZ + bmat Z_{0,t} as a controlled path, with y_dag = f(y) z_dag + bmat z_dag.

    Parameters:
    - a (array-like): Initial point in R^n.
    - bmat (array-like, optional): Linear map R^m -> R^n, zero when None.
    - f (VectorField): Field from R^n to L(R^m, R^n) with k >= 1.
    - Z (ControlledPath): Integrator valued in R^m, indices with 2 <= p < 3.
    - spec (SolveSpec, optional): Solver settings.

    Returns:
    - Solution: The controlled solution with indices (p, p, p / 2).
    """
    spec = spec or SolveSpec()
    a = spec.a if a is None else a
    return _rough_solve(a, bmat, f, Z, spec, "solve_rough")


def solve_mixed(a, f, g, Z, h, q_h, spec=None, bmat=None):
    """
    Solves y = a + int f(y) dZ + int g(y) dh + bmat Z, with h of finite q_h-variation (1/p + 1/q_h > 1).
    The Young term enters the value only; the Gubinelli derivative is that of the rough part.
    """
    spec = spec or SolveSpec()
    p = Z.p
    if 1.0 / p + 1.0 / q_h <= 1.0:
        raise YoungConditionError(f"The Young term needs 1/p + 1/q_h > 1, got p = {p}, q_h = {q_h}.")
    if not h.grid.same_as(Z.grid) or h.value_shape != (g.d,):
        raise DimensionMismatchError("The Young driver must live on the rough grid and match the field g.")
    if g.n != f.n:
        raise DimensionMismatchError("Both fields must act on the same state space.")
    omega = Z.base.omega
    grid = Z.grid
    K = spec.sewing_constant

    def young_term(ypath, i0, i1):
        hw = h.restrict(i0, i1)
        dag = None
        if spec.young_order >= 2:
            dag = np.einsum('tiwb,tba->tiwa', g.jacobian(ypath.values), g(ypath.values))
        return young_integral(omega_map(g, ypath), hw, q_h, p, omega, integrand_dagger=dag) \
            .values.reshape(i1 - i0 + 1, g.n)

    def extra_factor(i0, i1, state):
        hn = pvar_norm(h.restrict(i0, i1), q_h, omega, spec.scan_limit)
        w = float(omega(grid.times[i0], grid.times[i1]))
        return _field_lipschitz(g, state) * hn * w ** (1 / q_h) * (1 + K)

    a = spec.a if a is None else a
    return _rough_solve(a, bmat, f, Z, spec, "solve_mixed", young_term=young_term, extra_factor=extra_factor)


def dilated_family(a, f, g, X, h, eps_list, q_h, spec=None):
    """
    Solves y^eps = a + int f(y^eps) d(dilate(X, eps)) + int g(y^eps) dh for every eps.
    At eps = 0 the rough term vanishes and the family reduces to the Young equation in h.

    Returns:
    - list: One Solution per eps, in the order given.
    """
    return [solve_mixed(a, f, g, canonical_crp(dilate(X, eps)), h, q_h, spec) for eps in eps_list]


def pure_area_drift(f, A, c):
    """
    Drift of the ordinary differential equation solved by a rough equation driven by a pure-area path
    with level 2 equal to c (t - s) A: y' = c sum_{a,w,b} Df(y)[., w, b] f(y)[b, a] A[a, w].
    """
    A = np.asarray(A, dtype=float)

    def drift(t, y):
        return c * np.einsum('iwb,ba,aw->i', f.jacobian(y), f(y), A)

    return drift


def pure_area_reference(a, f, A, c, grid, rtol=1e-11, atol=1e-12):
    """
    High-accuracy solution of the induced drift equation on the grid instants, used as an oracle.
    """
    result = solve_ivp(pure_area_drift(f, A, c), (grid.start, grid.T), np.asarray(a, dtype=float),
                       method='DOP853', t_eval=grid.times, rtol=rtol, atol=atol)
    if not result.success:
        raise DivergenceError(f"Reference integration failed: {result.message}")
    return DiscretePath(grid, result.y.T)


@dataclass(frozen=True)
class RefinementStudy:
    Ns: list
    terminal: list
    differences: list
    orders: list

    def to_dict(self):
        return {"N": self.Ns, "yT": [np.asarray(v).tolist() for v in self.terminal],
                "differences": self.differences, "orders": self.orders}


def refinement_orders(solve_at, Ns):
    """
    Terminal values at successive grid sizes and the measured convergence orders
    log2(|y^(N_k) - y^(N_k+1)| / |y^(N_k+1) - y^(N_k+2)|).

    Parameters:
    - solve_at (callable): N -> terminal value.
    - Ns (list): Increasing grid sizes, usually successive powers of two.
    """
    if len(Ns) < 3:
        raise InsufficientDataError(f"A refinement study needs at least three grid sizes, got {len(Ns)}.")
    terminal = [np.asarray(solve_at(N), dtype=float) for N in Ns]
    diffs = [float(np.linalg.norm(b - a)) for a, b in zip(terminal, terminal[1:])]
    orders = [float(np.log(d0 / d1) / np.log(n1 / n0)) if d1 > 0 and d0 > 0 else float('nan')
              for d0, d1, n0, n1 in zip(diffs, diffs[1:], Ns, Ns[1:])]
    logging.info(f"Refinement study over N = {Ns}: orders {orders}")
    return RefinementStudy(Ns=list(Ns), terminal=terminal, differences=diffs, orders=orders)


def fitted_order(Ns, differences):
    fit = fit_exponent(Ns[:len(differences)], differences)
    return -fit.slope
