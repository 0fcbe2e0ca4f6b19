# solvers/sensitivity.py

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from calculus.crp import ControlledPath, canonical_crp, x_full_norm
from calculus.hoelder_fields import VectorField, combine_fields
from calculus.sewing import fit_exponent
from config import Config
from errors import ConfigError, DimensionMismatchError, DivergenceError, InsufficientRegularityError
from paths.grid_control import DiscretePath, full_norm
from paths.tensor_rough import dilate, translate
from solvers.rde import SolveSpec, solve_rough, solve_young

__all__ = [
    "JacobianFlow", "InvertibilityReport", "PerturbationSpec", "Problem", "ScanReport", "PERTURBATION_KINDS",
    "jacobian_flow", "jacobian_fd", "flow_compose_check", "cocycle_check", "invertibility_check",
    "perturbation_response", "expected_floor", "field_directional_derivative", "field_derivative_fd", "fit_exponent",
]

PERTURBATION_KINDS = ("initial-point", "field-direction", "dilation", "translation")


def _jacobian_augmented_field(f):
    """
    Field on R^{n + n^2} driving (y, vec M) with M' = Df(y) M, so that M is the Jacobian of the flow.
    """
    n, d = f.n, f.d

    def split(s):
        return s[..., :n], s[..., n:].reshape(s.shape[:-1] + (n, n))

    def value(s):
        y, M = split(s)
        top = f(y)
        bottom = np.einsum('...iwb,...bj->...ijw', f.jacobian(y), M).reshape(s.shape[:-1] + (n * n, d))
        return np.concatenate([top, bottom], axis=-2)

    def deriv1(s):
        y, M = split(s)
        lead = s.shape[:-1]
        Df, D2f = f.jacobian(y), f.derivative(2, y)
        top = np.concatenate([Df, np.zeros(lead + (n, d, n * n))], axis=-1)
        left = np.einsum('...iwbc,...bj->...ijwc', D2f, M).reshape(lead + (n * n, d, n))
        right = np.einsum('...iwb,jk->...ijwbk', Df, np.eye(n)).reshape(lead + (n * n, d, n * n))
        return np.concatenate([top, np.concatenate([left, right], axis=-1)], axis=-3)

    gamma = f.gamma if f.k == 2 else 1.0
    return VectorField(f"jacobian[{f.name}]", n + n * n, d, value, [deriv1], gamma=gamma, bounded=False)


def _direction_augmented_field(f, g):
    """
    Field on R^{2n} driving (y, u) with u' = Df(y) u + g(y).
    """
    n, d = f.n, f.d

    def value(s):
        y, u = s[..., :n], s[..., n:]
        return np.concatenate([f(y), np.einsum('...iwb,...b->...iw', f.jacobian(y), u) + g(y)], axis=-2)

    def deriv1(s):
        y, u = s[..., :n], s[..., n:]
        Df = f.jacobian(y)
        top = np.concatenate([Df, np.zeros_like(Df)], axis=-1)
        left = np.einsum('...iwbc,...b->...iwc', f.derivative(2, y), u) + g.jacobian(y)
        return np.concatenate([top, np.concatenate([left, Df], axis=-1)], axis=-3)

    gamma = min(f.gamma if f.k == 2 else 1.0, g.gamma if g.k == 1 else 1.0)
    return VectorField(f"direction[{f.name},{g.name}]", 2 * n, d, value, [deriv1], gamma=gamma, bounded=False)


def _state_at(a, f, Z, t_idx, spec):
    a = np.asarray(a, dtype=float).reshape(-1)
    if t_idx == 0:
        return a
    return solve_rough(a, None, f, Z.restrict(0, t_idx), spec).yT


@dataclass(frozen=True)
class JacobianFlow:
    """
    Jacobian M_{t,r} = d y_t / d a of the flow started at t_r, on the grid instants t_r .. t_t,
    with the base trajectory it was linearised along.
    """
    M: DiscretePath
    y: DiscretePath
    r_idx: int

    @property
    def terminal(self):
        return self.M.values[-1]


def jacobian_flow(a, f, Z, r_idx=0, t_idx=None, spec=None):
    """
    Jacobian of the flow y_{t,r}(a) with respect to the initial point, solved as the augmented equation
    for (y, M) with M_{r,r} = Id.

    Parameters:
    - a (array-like): Initial point at time 0; the base trajectory is solved up to t_r first.
    - f (VectorField): Field with k >= 2.
    - Z (ControlledPath): Integrator.
    - r_idx (int): Start index of the flow.
    - t_idx (int, optional): End index, defaults to N.
    - spec (SolveSpec, optional): Solver settings.

    Returns:
    - JacobianFlow: M on [t_r, t_t] as a path of n x n matrices.
    """
    if f.k < 2:
        raise InsufficientRegularityError(f"The Jacobian flow needs a field with k >= 2, '{f.name}' has {f.k}.")
    spec = spec or SolveSpec()
    t_idx = Z.N if t_idx is None else t_idx
    if not 0 <= r_idx < t_idx <= Z.N:
        raise ConfigError(f"Jacobian window indices must satisfy 0 <= r < t <= N, got ({r_idx}, {t_idx}).")
    n = f.n
    y_r = _state_at(a, f, Z, r_idx, spec)
    start = np.concatenate([y_r, np.eye(n).reshape(-1)])
    sol = solve_rough(start, None, _jacobian_augmented_field(f), Z.restrict(r_idx, t_idx), spec)
    values = sol.path.values
    grid = sol.path.grid
    return JacobianFlow(M=DiscretePath(grid, values[:, n:].reshape(-1, n, n)),
                        y=DiscretePath(grid, values[:, :n]), r_idx=r_idx)


def jacobian_fd(a, f, Z, delta=1e-5, t_idx=None, spec=None):
    """
    Central finite-difference Jacobian of a -> y_t(a), column by column.
    """
    spec = spec or SolveSpec()
    a = np.asarray(a, dtype=float).reshape(-1)
    t_idx = Z.N if t_idx is None else t_idx
    Zw = Z.restrict(0, t_idx)
    cols = []
    for i in range(a.size):
        e = np.zeros_like(a)
        e[i] = delta
        plus = solve_rough(a + e, None, f, Zw, spec).yT
        minus = solve_rough(a - e, None, f, Zw, spec).yT
        cols.append((plus - minus) / (2 * delta))
    return np.stack(cols, axis=1)


def flow_compose_check(a, f, Z, r, s, t, spec=None):
    """
    |y_{t,r}(a) - y_{t,s}(y_{s,r}(a))|: one pass over [t_r, t_t] against a restart at t_s.
    """
    spec = spec or SolveSpec()
    if not 0 <= r <= s <= t <= Z.N or r == t:
        raise ConfigError(f"Flow indices must satisfy r <= s <= t with r < t, got ({r}, {s}, {t}).")
    a = np.asarray(a, dtype=float).reshape(-1)
    one_pass = solve_rough(a, None, f, Z.restrict(r, t), spec).yT
    mid = a if s == r else solve_rough(a, None, f, Z.restrict(r, s), spec).yT
    two_pass = mid if s == t else solve_rough(mid, None, f, Z.restrict(s, t), spec).yT
    gap = float(np.linalg.norm(one_pass - two_pass))
    logging.info(f"Flow composition over indices ({r}, {s}, {t}): gap {gap:.3e}")
    return gap


def cocycle_check(a, f, Z, r, s, t, spec=None):
    """
    |M_{t,r} - M_{t,s} M_{s,r}| for the Jacobian flow along the trajectory started at a at time 0.
    """
    if not 0 <= r < s < t <= Z.N:
        raise ConfigError(f"Cocycle indices must satisfy r < s < t, got ({r}, {s}, {t}).")
    M_tr = jacobian_flow(a, f, Z, r, t, spec).terminal
    M_sr = jacobian_flow(a, f, Z, r, s, spec).terminal
    M_ts = jacobian_flow(a, f, Z, s, t, spec).terminal
    return float(np.linalg.norm(M_tr - M_ts @ M_sr))


@dataclass(frozen=True)
class InvertibilityReport:
    gap: float
    invertible: bool
    det_min: float
    det_nonzero: bool

    def to_dict(self):
        return {"gap": self.gap, "invertible": self.invertible, "det_min": self.det_min,
                "det_nonzero": self.det_nonzero}


def invertibility_check(a, f, Z, window=None, spec=None):
    """
    Operator-norm distance of the Jacobian flow from the identity on a window, and the smallest |det M|.
    A gap below 1 certifies invertibility through the Neumann series.
    """
    r, t = window if window is not None else (0, Z.N)
    flow = jacobian_flow(a, f, Z, r, t, spec)
    Ms = flow.M.values
    eye = np.eye(Ms.shape[-1])
    gap = float(np.max(np.linalg.norm(Ms - eye, ord=2, axis=(1, 2))))
    det_min = float(np.min(np.abs(np.linalg.det(Ms))))
    report = InvertibilityReport(gap=gap, invertible=gap < 1.0, det_min=det_min, det_nonzero=det_min > 0.0)
    logging.info(f"Invertibility on indices ({r}, {t}): {report.to_dict()}")
    return report


def field_directional_derivative(a, f, g, Z, spec=None):
    """
    Derivative of the solution map along the field direction g: u = d/d eps y(f + eps g) at eps = 0,
    solved jointly with y as u = int Df(y) u dZ + int g(y) dZ with u_0 = 0.

    Returns:
    - ControlledPath: u with its Gubinelli derivative, controlled by the base rough path of Z.
    """
    if f.k < 2 or g.k < 1:
        raise InsufficientRegularityError("The directional derivative needs k >= 2 for f and k >= 1 for g.")
    if g.n != f.n or g.d != f.d:
        raise DimensionMismatchError("The direction field must act between the same spaces as f.")
    n = f.n
    a = np.asarray(a, dtype=float).reshape(-1)
    sol = solve_rough(np.concatenate([a, np.zeros(n)]), None, _direction_augmented_field(f, g), Z, spec)
    Y = sol.y
    return ControlledPath(Y.base, Y.y.values[:, n:], Y.ydag[:, n:, :], *Y.indices)


def field_derivative_fd(a, f, g, Z, eps=1e-5, spec=None):
    """
    Central difference (y(f + eps g) - y(f - eps g)) / (2 eps) on the whole grid.
    """
    plus = solve_rough(a, None, combine_fields([f, g], [1.0, eps]), Z, spec).path
    minus = solve_rough(a, None, combine_fields([f, g], [1.0, -eps]), Z, spec).path
    return (plus - minus) * (1.0 / (2 * eps))


@dataclass
class Problem:
    """
    A base equation for perturbation scans: y = a + int f(y) dx over the rough path X.
    The Young regime (p < 2) integrates against the trace of X; the rough regime against its canonical lift.
    """
    a: np.ndarray
    f: VectorField
    X: object

    @property
    def regime(self):
        return "young" if self.X.p < 2 else "rough"

    def solve(self, spec, a=None, f=None, X=None):
        a = self.a if a is None else a
        f = self.f if f is None else f
        X = self.X if X is None else X
        if self.regime == "young":
            return solve_young(a, f, X.path(), None, X.p, X.omega, spec)
        return solve_rough(a, None, f, canonical_crp(X), spec)

    def distance(self, base, other, scan_limit):
        """
        ||other - base|| in the full p-variation norm (Young) or the controlled-path norm relative to the
        base rough path (rough).
        """
        if self.regime == "young":
            return full_norm(other.y - base.y, self.X.p, self.X.omega, scan_limit)
        diff = ControlledPath(base.y.base, other.y.y.values - base.y.y.values, other.y.ydag - base.y.ydag,
                              *base.y.indices)
        return x_full_norm(diff, scan_limit)


@dataclass
class PerturbationSpec:
    """
    A perturbation family. sizes are positive; direction is a vector (initial-point), a VectorField
    (field-direction) or a DiscretePath with its variation index q (translation).
    """
    kind: str
    sizes: list
    direction: object = None
    q: float = 1.0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ConfigError(f"Unknown perturbation kind '{self.kind}'. Known kinds: {', '.join(PERTURBATION_KINDS)}.")
        sizes = [float(s) for s in self.sizes]
        if len(sizes) < 3:
            raise ConfigError(f"A perturbation scan needs at least three sizes, got {len(sizes)}.")
        if any(not s > 0 for s in sizes):
            raise ConfigError("Perturbation sizes must be positive.")
        self.sizes = sorted(sizes, reverse=True)


@dataclass
class ScanReport:
    kind: str
    deltas: list
    responses: list
    slope: float
    r2: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"kind": self.kind, "deltas": list(self.deltas), "responses": list(self.responses),
                "slope": self.slope, "r2": self.r2, "flags": list(self.flags)}


def _perturbed(problem, pert, delta, spec):
    if pert.kind == "initial-point":
        direction = np.ones(problem.f.n) if pert.direction is None else np.asarray(pert.direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        return problem.solve(spec, a=np.asarray(problem.a, dtype=float) + delta * direction)
    if pert.kind == "field-direction":
        if pert.direction is None:
            raise ConfigError("A field-direction scan needs a direction field.")
        return problem.solve(spec, f=combine_fields([problem.f, pert.direction], [1.0, delta]))
    if pert.kind == "dilation":
        return problem.solve(spec, X=dilate(problem.X, 1.0 + delta))
    if pert.direction is None:
        raise ConfigError("A translation scan needs a translation path.")
    return problem.solve(spec, X=translate(problem.X, pert.direction * delta, pert.q))


def expected_floor(f, kappa):
    """
    Lowest slope the scan is expected to show: 1 for Lipschitz data, (1 - kappa) gamma for Hoelder-boundary fields.
    """
    if f.k >= 1 and f.gamma >= 1:
        return 1.0
    gamma = f.gamma
    return (1 - kappa) * gamma


def _slope_flags(kind, f, kappa, slope):
    """
    Flags of a fitted slope against its expected value. Hoelder-boundary fields are exploratory and only
    need floor - 0.1; Lipschitz data needs 0.95, and initial-point scans of C^2 fields at most 1.05.
    """
    floor = expected_floor(f, kappa)
    if floor < 1.0:
        return ["exploratory"] + (["below-floor"] if np.isfinite(slope) and slope < floor - 0.1 else [])
    flags = []
    if not np.isfinite(slope):
        return flags
    if slope < 0.95:
        flags.append("below-floor")
    if kind == "initial-point" and f.k >= 2 and slope > 1.05:
        flags.append("above-range")
    return flags


def perturbation_response(problem, pert, spec=None, jobs=None):
    """
    Measures delta -> ||J(perturbed by delta) - J(base)|| and fits the log-log slope.
    The solver tolerance is tightened to min(tol, delta_min^2 / 100) for every run.
    Runs are independent and executed on a thread pool; a diverging run is reported as nan and flags
    the report as partial.

    Parameters:
    - problem (Problem): The base equation.
    - pert (PerturbationSpec): The family of perturbations.
    - spec (SolveSpec, optional): Solver settings.
    - jobs (int, optional): Worker count, defaults to Config.JOBS.

    Returns:
    - ScanReport: Responses sorted by decreasing delta, slope, r^2 and flags.
    """
    spec = spec or SolveSpec()
    jobs = Config.JOBS if jobs is None else max(1, int(jobs))
    spec = spec.with_tol(min(spec.tol, min(pert.sizes) ** 2 / 100))
    base = problem.solve(spec)
    flags = []

    def run(delta):
        try:
            return problem.distance(base, _perturbed(problem, pert, delta, spec), spec.scan_limit)
        except DivergenceError as exc:
            logging.warning(f"Perturbation {pert.kind} at delta = {delta:g} failed: {exc}")
            return float('nan')

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        responses = [float(r) for r in pool.map(run, pert.sizes)]

    if any(np.isnan(responses)):
        flags.append("partial")
    usable = [(d, r) for d, r in zip(pert.sizes, responses) if np.isfinite(r) and r > 0]
    slope, r2 = float('nan'), float('nan')
    if len(usable) >= 2:
        fit = fit_exponent([d for d, _ in usable], [r for _, r in usable])
        slope, r2 = fit.slope, fit.r2
        if fit.flagged:
            flags.append("unreliable-fit")
    else:
        flags.append("insufficient-data")
    flags.extend(_slope_flags(pert.kind, problem.f, spec.kappa, slope))
    report = ScanReport(kind=pert.kind, deltas=list(pert.sizes), responses=responses, slope=slope, r2=r2,
                        flags=flags)
    logging.info(f"Perturbation scan '{pert.kind}': slope {slope:.4f}, r2 {r2:.4f}, flags {flags}")
    return report
