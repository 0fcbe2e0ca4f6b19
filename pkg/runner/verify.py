# runner/verify.py

import logging
import time
from dataclasses import dataclass

import numpy as np

from calculus.crp import canonical_crp, flat
from calculus.hoelder_fields import build_field, interpolation_check
from calculus.sewing import defect_scan, sew_additive
from calculus.young import young_bound_check, young_germ, young_integral
from config import Config
from errors import RoughPathError
from paths.drivers import DriverSpec, build_driver, lift_piecewise_linear, pure_area, sample_fbm, smooth_path
from paths.grid_control import DiscretePath, Grid, make_rng, sample_triples
from paths.tensor_rough import Tensor2, chen_defect
from persistence.data_persistence import rough_path_from_dict, rough_path_to_dict
from runner.utils import translation_direction
from solvers.rde import SolveSpec, pure_area_reference, refinement_orders, solve_rough
from solvers.sensitivity import (PerturbationSpec, Problem, cocycle_check, expected_floor, flow_compose_check,
                                 jacobian_fd, jacobian_flow, perturbation_response)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "measured": self.measured,
                "threshold": self.threshold, "detail": self.detail, "seconds": self.seconds}


@dataclass(frozen=True)
class VerifyReport:
    checks: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _smooth(kind, N, d=1, p=2.5, **params):
    spec = DriverSpec(kind=kind, d=d, N=N, params=params)
    return lift_piecewise_linear(smooth_path(spec), p)


def check_group_axioms(seed):
    """
    Associativity and inverses of the level-2 tensor group on random elements.
    """
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(1000):
        a, b, c = (Tensor2(rng.standard_normal(3), rng.standard_normal((3, 3))) for _ in range(3))
        worst = max(worst, ((a * b) * c).distance(a * (b * c)),
                    (a * a.inverse()).distance(Tensor2.identity(3)),
                    (a.inverse() * a).distance(Tensor2.identity(3)))
    return worst, 1e-12, ""


def check_chen(seed):
    """
    Chen composition of steps against the vectorised prefix increments, and stored-increment validation
    after a document round trip.
    """
    X = build_driver(DriverSpec(kind="fbm", d=2, N=256, H=0.4, seed=seed), 2.5)
    worst = 0.0
    for r, _, t in sample_triples(X.N, 100, seed):
        direct = X.increment(r, t)
        ii, jj = np.array([r]), np.array([t])
        worst = max(worst, float(np.max(np.abs(direct.level1 - X.level1_increments(ii, jj)[0]))),
                    float(np.max(np.abs(direct.level2 - X.level2_increments(ii, jj)[0]))))
    loaded = rough_path_from_dict(rough_path_to_dict(X, increments=[(0, X.N), (3, 100), (17, 18)]))
    worst = max(worst, chen_defect(loaded))
    return worst, 1e-12, ""


def check_young_oracle(seed):
    """
    int x dx for x = sin(2 pi t) with the second-order germ against (x_t^2 - x_0^2) / 2.
    """
    grid = Grid.uniform(2 ** 12)
    x = DiscretePath(grid, np.sin(2 * np.pi * grid.times))
    ones = np.ones((len(grid), 1, 1))
    integral = young_integral(x, x, 1.0, 1.0, integrand_dagger=ones).values[:, 0]
    exact = 0.5 * (x.values[:, 0] ** 2 - x.values[0, 0] ** 2)
    return float(np.max(np.abs(integral - exact))), 1e-12, ""


def check_young_left_point_order(seed):
    """
    First-order germ on int t^2 dt: the error against 1/3 halves with every refinement.
    """
    errors = []
    for N in (1024, 2048, 4096):
        grid = Grid.uniform(N)
        x = DiscretePath(grid, grid.times)
        y = DiscretePath(grid, grid.times ** 2)
        errors.append(abs(young_integral(y, x, 1.0, 1.0).values[-1, 0] - 1.0 / 3.0))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    return float(np.max(np.abs(orders - 1.0))), 0.05, f"orders = {orders.tolist()}"


def check_young_constant(seed):
    """
    Measured Young constant K at two resolutions; stable within 30% across one refinement.
    """
    Ks = []
    for N in (512, 1024):
        grid = Grid.uniform(N)
        x = DiscretePath(grid, np.sin(2 * np.pi * grid.times))
        Ks.append(young_bound_check(x, x, 1.5, 1.5))
    drift = abs(Ks[1] - Ks[0]) / Ks[0]
    return drift, 0.3, f"K = {Ks}"


def check_sewing_exactness(seed):
    """
    Additivity of sewn Young integrals, multiplicativity of the sewn flat germ and flat(canonical) = x2.
    """
    X = build_driver(DriverSpec(kind="fbm", d=2, N=512, H=0.4, seed=seed), 2.5)
    triples = sample_triples(X.N, 200, seed)
    path = X.path()
    y = path.map_values(lambda v: np.cos(v)[:, :, None] * np.ones((1, 1, 2)))
    family = sew_additive(young_germ(y, path, 1.5, 1.5), X.grid)
    fam = flat(canonical_crp(X))
    ii, jj = triples[:, 0], triples[:, 2]
    gap = np.max(np.abs(fam.increments(ii, jj) - X.level2_increments(ii, jj)))
    worst = max(family.additivity_defect(triples), fam.family.multiplicativity_defect(triples), float(gap))
    return worst, 1e-12, ""


def check_young_defect(seed):
    """
    Defect exponent of the left-point Young germ on a smooth path; at least the claimed theta.
    """
    grid = Grid.uniform(1024)
    x = DiscretePath(grid, grid.times)
    germ = young_germ(x, x, 1.5, 1.5)
    report = defect_scan(germ, grid, n_triples=200, seed=seed)
    return germ.theta - report.theta_hat, 0.1, f"theta_hat = {report.theta_hat:.4f}"


def check_interpolation(seed):
    """
    Interpolation inequality over 10^5 random quadruples for |x|^{1/2} and tanh at three splits.
    """
    rng = make_rng(seed)
    quads = rng.uniform(-2.0, 2.0, size=(100_000, 4, 1))
    worst = -np.inf
    for text, gamma in (("holder:gamma=0.5", 0.5), ("tanh:scale=1", 1.0)):
        g = build_field(text)
        for kappa in (0.25, 0.5, 0.75):
            worst = max(worst, interpolation_check(g, gamma, kappa, quads))
    return worst, 1e-12, ""


def check_rough_exponential(seed):
    X = _smooth("smooth-poly", 2 ** 12)
    sol = solve_rough(np.ones(1), None, build_field("linear:lambda=0.5"), canonical_crp(X))
    exact = np.exp(0.5)
    return float(abs(sol.yT[0] - exact) / exact), 1e-6, ""


def check_rotation_norm(seed):
    X = _smooth("smooth-sin", 2 ** 12)
    sol = solve_rough(np.array([1.0, 0.0]), None, build_field("rotation"), canonical_crp(X))
    norms = np.linalg.norm(sol.path.values, axis=1)
    return float(np.max(np.abs(norms - 1.0))), 1e-6, ""


def check_pure_area(seed):
    grid = Grid.uniform(1024)
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    X = pure_area(A, 0.2, grid)
    f = build_field("tanh:scale=0.5", n=1, d=2)
    sol = solve_rough(np.array([0.3]), None, f, canonical_crp(X))
    ref = pure_area_reference(np.array([0.3]), f, A, 0.2, grid)
    return float(np.max(np.abs(sol.path.values - ref.values))), 1e-4, ""


JACOBIAN_FIELDS = ("linear:lambda=0.5", "rotation", "tanh:scale=0.8", "sin:scale=0.5")


def jacobian_drivers(seed):
    return {"smooth": _smooth("smooth-sin", 256, d=2),
            "fbm": build_driver(DriverSpec(kind="fbm", d=2, N=1024, H=0.4, seed=seed), 2.5)}


def check_jacobian(seed):
    """
    Jacobian flow against central differences for four fields over a smooth lift and an fBm lift.
    """
    worst = 0.0
    for X in jacobian_drivers(seed).values():
        Z = canonical_crp(X)
        for text in JACOBIAN_FIELDS:
            f = build_field(text, n=2, d=2)
            a = np.array([0.2, 0.5])
            M = jacobian_flow(a, f, Z).terminal
            fd = jacobian_fd(a, f, Z, delta=1e-4)
            worst = max(worst, float(np.linalg.norm(M - fd, ord=2) / np.linalg.norm(fd, ord=2)))
    return worst, 1e-3, ""


def check_jacobian_cocycle(seed):
    """
    M_{t,r} = M_{t,s} M_{s,r} on the same eight cases, each at a random split.
    """
    spec = SolveSpec()
    rng = make_rng(seed)
    worst = 0.0
    for X in jacobian_drivers(seed).values():
        Z = canonical_crp(X)
        for text in JACOBIAN_FIELDS:
            r, s, t = np.sort(rng.choice(np.arange(X.N + 1), size=3, replace=False))
            f = build_field(text, n=2, d=2)
            worst = max(worst, cocycle_check(np.array([0.2, 0.5]), f, Z, int(r), int(s), int(t), spec))
    return worst, 10 * spec.tol, ""


def check_flow_property(seed):
    """
    One pass against a restart at an intermediate time, over 20 random splits on three problems.
    """
    spec = SolveSpec()
    smooth = canonical_crp(_smooth("smooth-sin", 512, d=2))
    rough = canonical_crp(build_driver(DriverSpec(kind="fbm", d=2, N=256, H=0.4, seed=seed), 2.5))
    problems = [(smooth, build_field("linear:lambda=0.5", n=2, d=2), 7),
                (smooth, build_field("rotation", d=2), 7),
                (rough, build_field("tanh:scale=0.8", n=2, d=2), 6)]
    rng = make_rng(seed)
    worst = 0.0
    for Z, f, splits in problems:
        for _ in range(splits):
            r, s, t = np.sort(rng.choice(np.arange(Z.N + 1), size=3, replace=False))
            worst = max(worst, flow_compose_check(np.array([0.1, -0.2]), f, Z, int(r), int(s), int(t), spec))
    return worst, 10 * spec.tol, ""


def check_initial_point_scan(seed):
    X = _smooth("smooth-poly", 256)
    problem = Problem(a=np.ones(1), f=build_field("linear:lambda=0.5"), X=X)
    report = perturbation_response(problem, PerturbationSpec("initial-point", [1e-2, 1e-3, 1e-4]))
    measured = abs(report.slope - 1.0) if report.r2 >= Config.FIT_R2_MIN else float('inf')
    return measured, 0.05, f"slope = {report.slope:.4f}, r2 = {report.r2:.4f}"


def _driver_scan(seed, kind):
    X = build_driver(DriverSpec(kind="fbm", d=2, N=256, H=0.4, seed=seed), 2.5)
    problem = Problem(a=np.array([0.1, 0.2]), f=build_field("tanh:scale=0.8", n=2, d=2), X=X)
    direction = translation_direction(X) if kind == "translation" else None
    report = perturbation_response(problem, PerturbationSpec(kind, [1e-2, 1e-3, 1e-4], direction=direction))
    return 0.95 - report.slope, 0.0, f"slope = {report.slope:.4f}, flags = {report.flags}"


def check_dilation_scan(seed):
    return _driver_scan(seed, "dilation")


def check_translation_scan(seed):
    return _driver_scan(seed, "translation")


def check_boundary_field_scan(seed):
    """
    Initial-point scan through f(y) = |y|^{3/2}: reported as exploratory, slope at least (1 - kappa) gamma - 0.1.
    """
    f = build_field("power:gamma=0.5")
    problem = Problem(a=np.array([0.3]), f=f, X=_smooth("smooth-sin", 256, p=2.2))
    report = perturbation_response(problem, PerturbationSpec("initial-point", [1e-2, 1e-3, 1e-4]))
    floor = expected_floor(f, SolveSpec().kappa) - 0.1
    measured = floor - report.slope if "exploratory" in report.flags else float('inf')
    return measured, 0.0, f"slope = {report.slope:.4f}, floor = {floor:.4f}, flags = {report.flags}"


def check_refinement(seed):
    f = build_field("tanh:scale=0.8")

    def terminal(N):
        return solve_rough(np.array([0.2]), None, f, canonical_crp(_smooth("smooth-sin", N))).yT

    study = refinement_orders(terminal, [2 ** 9, 2 ** 10, 2 ** 11, 2 ** 12])
    return 1.0 - min(study.orders), 0.0, f"orders = {study.orders}"


def symmetrised_log_terminal(fine, N, f, spec=None, p=2.5):
    """
    (log y_T(x) + log y_T(-x)) / 2 for dy = f(y) dx from y_0 = 1, with x the scalar path fine subsampled to
    N steps. For a linear field the exact value is 0 and the odd-order error terms of the scheme cancel.
    """
    grid = Grid.uniform(N, T=fine.grid.T)
    values = fine.values[::fine.grid.N // N]
    logs = [np.log(solve_rough(np.ones(1), None, f, canonical_crp(
        lift_piecewise_linear(DiscretePath(grid, sign * values), p)), spec).yT[0]) for sign in (1.0, -1.0)]
    return 0.5 * (logs[0] + logs[1])


def nested_fbm_differences(seeds, Ns, lam=0.25):
    """
    Successive differences of symmetrised terminal values over nested subsamples of one fine fBm path
    (H = 0.4) per seed, averaged over the seeds.
    """
    f = build_field(f"linear:lambda={lam}")
    # one window per solve, halved only when the iteration fails
    spec = SolveSpec(safety=float('inf'))
    diffs = []
    for seed in seeds:
        fine = sample_fbm(DriverSpec(kind="fbm", d=1, N=max(Ns), H=0.4, seed=seed))
        study = refinement_orders(lambda N: symmetrised_log_terminal(fine, N, f, spec), Ns)
        diffs.append(study.differences)
    return np.mean(diffs, axis=0)


def check_fbm_refinement(seed):
    """
    Nested fBm lifts over N = 2^9 ... 2^12, averaged over 32 paths: successive differences decrease strictly.
    """
    diffs = nested_fbm_differences(range(seed, seed + 32), [2 ** 9, 2 ** 10, 2 ** 11, 2 ** 12])
    return float(np.max(diffs[1:] / diffs[:-1])), 1.0, f"differences = {diffs.tolist()}"


# Every check returns (measured, threshold, detail) and passes when measured <= threshold
CHECKS = {
    "tensor_group_axioms": check_group_axioms,
    "chen_consistency": check_chen,
    "young_oracle": check_young_oracle,
    "young_left_point_order": check_young_left_point_order,
    "young_constant_stability": check_young_constant,
    "sewing_exactness": check_sewing_exactness,
    "young_defect_exponent": check_young_defect,
    "interpolation_inequality": check_interpolation,
    "rough_exponential": check_rough_exponential,
    "rotation_norm": check_rotation_norm,
    "pure_area_drift": check_pure_area,
    "jacobian_vs_fd": check_jacobian,
    "jacobian_cocycle": check_jacobian_cocycle,
    "flow_property": check_flow_property,
    "initial_point_scan": check_initial_point_scan,
    "dilation_scan": check_dilation_scan,
    "translation_scan": check_translation_scan,
    "boundary_field_scan": check_boundary_field_scan,
    "refinement_order": check_refinement,
    "fbm_refinement_monotone": check_fbm_refinement,
}


def verify_suite(seed=None, names=None):
    """
    Runs the invariant checks at fixed seeds and grid sizes.

    Parameters:
    - seed (int, optional): Seed of every randomised check, defaults to Config.SEED.
    - names (iterable, optional): Subset of CHECKS to run.

    Returns:
    - VerifyReport: Per-check status with the measured quantity, its threshold and the wall time in seconds.
    """
    seed = Config.SEED if seed is None else seed
    results = []
    for name in (names or CHECKS):
        started = time.perf_counter()
        try:
            measured, threshold, detail = CHECKS[name](seed)
            passed = bool(measured <= threshold)
        except RoughPathError as e:
            measured, threshold, detail, passed = float('nan'), float('nan'), str(e), False
        seconds = time.perf_counter() - started
        results.append(CheckResult(name=name, passed=passed, measured=float(measured),
                                   threshold=float(threshold), detail=detail, seconds=seconds))
        if passed:
            logging.info(f"Check '{name}' passed in {seconds:.2f}s: {measured:.3e} <= {threshold:.3e} {detail}")
        else:
            logging.error(f"Check '{name}' failed in {seconds:.2f}s: {measured:.3e} vs {threshold:.3e} {detail}")
    return VerifyReport(checks=tuple(results))
