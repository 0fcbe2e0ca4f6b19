# runner/commands.py

import logging
import time
from dataclasses import asdict, dataclass
from dataclasses import field as dataclass_field

import numpy as np

from calculus.crp import canonical_crp
from calculus.hoelder_fields import build_field
from calculus.sewing import fit_exponent
from config import Config
from errors import ConfigError, DivergenceError, RoughPathError
from paths.drivers import DriverSpec, build_driver, sample_fbm
from paths.grid_control import DiscretePath
from paths.tensor_rough import geometric_defect, rough_norm
from persistence.data_persistence import ArtifactStore
from runner.utils import build_problem, environment, parse_deltas, resolve_kind, translation_direction
from runner.verify import verify_suite
from solvers.rde import SolveSpec, solve_rough, solve_young
from solvers.sensitivity import (PerturbationSpec, Problem, invertibility_check, jacobian_fd, jacobian_flow,
                                 perturbation_response)

COMMAND_NAMES = ("lift", "solve", "jacobian", "scan", "verify", "fbm")
FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    """
    One run of the command-line front end. driver and field are registry spec strings;
    solver holds SolveSpec overrides (e.g. {"max_iter": 100}).
    """
    command: str
    driver: str = "smooth-poly"
    field: str = "linear:lambda=0.5"
    p: float = Config.DEFAULT_P
    N: int = Config.DEFAULT_N
    seed: int = Config.SEED
    tol: float = Config.TOL
    out: str = f"{Config.OUTPUT_DIR}/run"
    format: str = "csv"
    jobs: int = Config.JOBS
    deltas: list = dataclass_field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    kind: str = "initial-point"
    a: object = None
    solver: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMAND_NAMES:
            raise ConfigError(f"Unknown command '{self.command}'. Known commands: {', '.join(COMMAND_NAMES)}.")
        if self.format not in FORMATS:
            raise ConfigError(f"Unknown output format '{self.format}'.")
        if not 1 <= self.p < 3:
            raise ConfigError(f"p must lie in [1, 3), got {self.p}.")
        self.deltas = parse_deltas(self.deltas)
        self.kind = resolve_kind(self.kind)

    @classmethod
    def from_dict(cls, data):
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}.")
        return cls(**known)

    def to_dict(self):
        out = asdict(self)
        if isinstance(self.a, np.ndarray):
            out["a"] = self.a.tolist()
        return out

    def solve_spec(self):
        try:
            return SolveSpec(**{"tol": self.tol, **self.solver})
        except TypeError as e:
            raise ConfigError(f"Invalid solver overrides {self.solver}: {e}") from e


def _solve(X, f, a, spec):
    if X.p < 2:
        return solve_young(a, f, X.path(), None, X.p, X.omega, spec)
    return solve_rough(a, None, f, canonical_crp(X), spec)


def run_lift(config, store):
    """
    Builds the driver's rough path and writes its trace, the rough path document and a summary.
    """
    spec = DriverSpec.parse(config.driver, default_N=config.N, default_seed=config.seed)
    X = build_driver(spec, config.p)
    store.save_path("path", X.path(), config.format)
    store.save_rough_path("rough", X)
    norm = rough_norm(X)
    summary = {"driver": spec.to_string(), "p": X.p, "rough_norm": norm.value, "level1": norm.level1,
               "level2": norm.level2, "geometric_defect": geometric_defect(X)}
    store.save_report("lift", summary)
    return summary


def run_fbm(config, store):
    """
    Samples fractional Brownian motion and reports the Hurst index recovered from the increment variogram.
    """
    spec = DriverSpec.parse(config.driver, default_N=config.N, default_seed=config.seed)
    if spec.kind not in ("fbm", "bm"):
        raise ConfigError(f"The fbm command needs an fbm or bm driver, got '{spec.kind}'.")
    path = sample_fbm(spec)
    store.save_path("path", path, config.format)
    lags = [2 ** k for k in range(int(np.log2(spec.N)) - 2)]
    dt = spec.T / spec.N
    variogram = [float(np.mean((path.values[lag:] - path.values[:-lag]) ** 2)) for lag in lags]
    fit = fit_exponent([lag * dt for lag in lags], variogram)
    summary = {"driver": spec.to_string(), "H": spec.H, "H_hat": fit.slope / 2, "fit": fit.to_dict()}
    store.save_report("fbm", summary)
    return summary


def run_solve(config, store):
    _, X, f, a = build_problem(config)
    solution = _solve(X, f, a, config.solve_spec())
    store.save_path("solution", solution.path, config.format)
    if X.p >= 2:
        rough_file = store.save_rough_path("rough", X)
        store.save_controlled_path("controlled", solution.y, rough_file.rsplit("/", 1)[-1])
    report = solution.to_report(p=X.p)
    store.save_report("solve", report)
    return {"yT": report["yT"], "windows": len(solution.windows)}


def run_jacobian(config, store):
    _, X, f, a = build_problem(config)
    spec = config.solve_spec()
    Z = canonical_crp(X)
    flow = jacobian_flow(a, f, Z, spec=spec)
    fd = jacobian_fd(a, f, Z, delta=1e-4, spec=spec)
    M = flow.terminal
    rel = float(np.linalg.norm(M - fd, ord=2) / max(np.linalg.norm(fd, ord=2), 1e-300))
    store.save_path("jacobian", DiscretePath(flow.M.grid, flow.M.values.reshape(len(flow.M.grid), -1)),
                    config.format)
    summary = {"M_T": M.tolist(), "fd": fd.tolist(), "relative_error": rel,
               "invertibility": invertibility_check(a, f, Z, spec=spec).to_dict()}
    store.save_report("jacobian", summary)
    return summary


def run_scan(config, store):
    _, X, f, a = build_problem(config)
    direction, q = None, 1.0
    if config.kind == "field-direction":
        direction = build_field("constant:value=1", n=f.n, d=f.d)
    elif config.kind == "translation":
        direction = translation_direction(X)
    pert = PerturbationSpec(kind=config.kind, sizes=config.deltas, direction=direction, q=q)
    report = perturbation_response(Problem(a=a, f=f, X=X), pert, config.solve_spec(), config.jobs)
    store.save_report("scan", report)
    return report.to_dict()


def run_verify(config, store):
    report = verify_suite(seed=config.seed)
    store.save_report("verify", report)
    return report.to_dict()


# Command registry: name -> handler(config, store) returning a JSON-ready summary
COMMANDS = {
    "lift": run_lift,
    "solve": run_solve,
    "jacobian": run_jacobian,
    "scan": run_scan,
    "verify": run_verify,
    "fbm": run_fbm,
}


def run(config):
    """
    Executes one run and writes its manifest.

    Parameters:
    - config (RunConfig): The run.

    Returns:
    - int: 0 on success, 1 on solver divergence or failed verification, 2 on configuration errors.
    """
    store = ArtifactStore(config.out)
    start = time.perf_counter()
    try:
        summary = COMMANDS[config.command](config, store)
    except DivergenceError as e:
        logging.error(f"Solver diverged: {e}")
        return 1
    except RoughPathError as e:
        logging.error(f"Configuration error: {e}")
        return 2
    status = 0
    if config.command == "verify" and not summary["passed"]:
        logging.error("Verification suite reported failures.")
        status = 1
    if Config.WRITE_MANIFEST:
        store.save_manifest({"config": config.to_dict(), "environment": environment(),
                             "wall_time": time.perf_counter() - start, "status": status,
                             "artifacts": list(store.written)})
    logging.info(f"Command '{config.command}' finished with status {status}.")
    return status
