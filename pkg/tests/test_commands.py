# tests/test_commands.py

import json

import numpy as np
import pytest

import main
from errors import ConfigError
from paths.tensor_rough import Tensor2
from persistence.data_persistence import load_controlled_path, load_json, load_manifest, load_path
from runner import commands
from runner.commands import RunConfig, run
from runner.utils import initial_point, parse_deltas, resolve_kind
from runner.verify import CheckResult, VerifyReport, verify_suite


def _config(tmp_path, command, **kwargs):
    return RunConfig(command=command, out=str(tmp_path / command), **kwargs)


@pytest.mark.parametrize("kwargs", [{"command": "plot"}, {"command": "lift", "format": "xml"},
                                    {"command": "lift", "p": 3.0}, {"command": "scan", "kind": "shear"},
                                    {"command": "scan", "deltas": "1e-2,x"}])
def test_run_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"command": "lift", "colour": "red"})


def test_config_round_trips_through_dict():
    config = RunConfig(command="scan", kind="dilation", deltas="1e-1,1e-2,1e-3", a=[0.5])
    again = RunConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config
    assert again.deltas == [1e-1, 1e-2, 1e-3]


def test_kind_aliases_and_deltas():
    assert resolve_kind("initial") == "initial-point"
    assert resolve_kind("Field") == "field-direction"
    assert parse_deltas("1e-2, 1e-3,") == [1e-2, 1e-3]


def test_initial_point_broadcast():
    assert np.array_equal(initial_point(RunConfig(command="solve"), 2), np.ones(2))
    assert np.array_equal(initial_point(RunConfig(command="solve", a=0.5), 3), np.full(3, 0.5))
    with pytest.raises(ConfigError):
        initial_point(RunConfig(command="solve", a=[1.0, 2.0]), 3)


def test_solver_overrides():
    spec = RunConfig(command="solve", tol=1e-8, solver={"max_iter": 5}).solve_spec()
    assert (spec.tol, spec.max_iter) == (1e-8, 5)
    with pytest.raises(ConfigError):
        RunConfig(command="solve", solver={"max_iterations": 5}).solve_spec()


def test_lift_command(tmp_path):
    config = _config(tmp_path, "lift", driver="fbm:H=0.4,d=2,N=256,seed=3")
    assert run(config) == 0
    summary = load_json(str(tmp_path / "lift_lift.json"))
    assert summary["geometric_defect"] <= 1e-14
    assert summary["rough_norm"] == max(summary["level1"], summary["level2"])
    manifest = load_manifest(str(tmp_path / "lift_manifest.json"))
    assert manifest["status"] == 0
    assert manifest["config"]["driver"] == "fbm:H=0.4,d=2,N=256,seed=3"
    assert str(tmp_path / "lift_rough.json") in manifest["artifacts"]


def test_lift_is_reproducible(tmp_path):
    for name in ("first", "second"):
        run(RunConfig(command="lift", driver="fbm:H=0.4,N=128,seed=9", out=str(tmp_path / name)))
    first = (tmp_path / "first_rough.json").read_text()
    assert first == (tmp_path / "second_rough.json").read_text()


def test_solve_command(tmp_path):
    config = _config(tmp_path, "solve", driver="smooth-poly:N=256", field="linear:lambda=0.5")
    assert run(config) == 0
    path = load_path(str(tmp_path / "solve_solution.csv"))
    assert path.values[-1, 0] == pytest.approx(np.exp(0.5), rel=1e-5)
    controlled = load_controlled_path(str(tmp_path / "solve_controlled.json"))
    assert np.allclose(controlled.y.values, path.values)


def test_solve_command_in_young_regime(tmp_path):
    config = _config(tmp_path, "solve", driver="smooth-poly:N=256", field="linear:lambda=0.5", p=1.0,
                     format="json")
    assert run(config) == 0
    report = load_json(str(tmp_path / "solve_solve.json"))
    assert report["regime"] == "young"
    assert report["yT"][0] == pytest.approx(np.exp(0.5), rel=1e-5)


def test_fbm_command_recovers_hurst_index(tmp_path):
    assert run(_config(tmp_path, "fbm", driver="fbm:H=0.3,N=4096,seed=2")) == 0
    summary = load_json(str(tmp_path / "fbm_fbm.json"))
    assert summary["H_hat"] == pytest.approx(0.3, abs=0.05)


def test_fbm_command_needs_fbm_driver(tmp_path):
    assert run(_config(tmp_path, "fbm", driver="smooth-sin")) == 2


def test_jacobian_command(tmp_path):
    config = _config(tmp_path, "jacobian", driver="fbm:H=0.4,d=2,N=128,seed=4", field="tanh:scale=0.8")
    assert run(config) == 0
    summary = load_json(str(tmp_path / "jacobian_jacobian.json"))
    assert summary["relative_error"] <= 1e-3
    assert "gap" in summary["invertibility"]


def test_scan_command(tmp_path):
    config = _config(tmp_path, "scan", driver="smooth-poly:N=128", field="tanh", kind="initial")
    assert run(config) == 0
    report = load_json(str(tmp_path / "scan_scan.json"))
    assert report["slope"] == pytest.approx(1.0, abs=0.05)
    assert report["deltas"] == [1e-2, 1e-3, 1e-4]


def test_regime_errors_exit_with_two(tmp_path):
    config = _config(tmp_path, "solve", driver="fbm:H=0.3,N=64")
    assert run(config) == 2


def test_divergence_exits_with_one(tmp_path):
    config = _config(tmp_path, "solve", driver="smooth-poly:N=64", solver={"max_iter": 1, "stack": False})
    assert run(config) == 1


def test_group_check_catches_a_broken_inverse(monkeypatch):
    assert verify_suite(names=["tensor_group_axioms"]).passed
    monkeypatch.setattr("paths.tensor_rough.tensor_inv",
                        lambda a: Tensor2(-a.level1, a.level2 + np.outer(a.level1, a.level1)))
    report = verify_suite(names=["tensor_group_axioms"])
    assert not report.passed
    assert report.checks[0].measured > 1e-12


def test_failed_verification_exits_with_one(tmp_path, monkeypatch):
    failing = VerifyReport(checks=(CheckResult(name="chen_consistency", passed=False, measured=1.0, threshold=0.0),))
    monkeypatch.setattr(commands, "verify_suite", lambda seed=None: failing)
    assert run(_config(tmp_path, "verify")) == 1
    assert load_json(str(tmp_path / "verify_verify.json"))["passed"] is False


@pytest.mark.parametrize("name", ["young_oracle", "young_left_point_order", "sewing_exactness",
                                  "interpolation_inequality", "young_defect_exponent"])
def test_fast_checks_pass(name):
    assert verify_suite(names=[name]).passed


def test_check_results_carry_their_timing():
    report = verify_suite(names=["young_oracle", "young_left_point_order"])
    assert [c.name for c in report.checks] == ["young_oracle", "young_left_point_order"]
    assert all(c.seconds > 0.0 for c in report.checks)
    assert report.to_dict()["checks"][1]["seconds"] == report.checks[1].seconds


def test_main_runs_a_command(tmp_path):
    out = str(tmp_path / "cli")
    assert main.main(["lift", "--driver", "smooth-sin:d=2", "--N", "64", "--out", out]) == 0
    manifest = load_manifest(out + "_manifest.json")
    assert manifest["config"]["N"] == 64


def test_main_reports_configuration_errors(tmp_path):
    assert main.main(["lift", "--p", "3.5", "--out", str(tmp_path / "bad")]) == 2
    assert main.main(["--out", str(tmp_path / "none")]) == 2
    assert main.main(["solve", "--a", "one,two"]) == 2
    assert main.main(["solve", "--config", str(tmp_path / "missing.json")]) == 2


def test_config_file_overrides_flags(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({"driver": "smooth-poly:N=32", "out": str(tmp_path / "fromfile")}))
    assert main.main(["lift", "--driver", "smooth-sin", "--config", str(config_file)]) == 0
    summary = load_json(str(tmp_path / "fromfile_lift.json"))
    assert summary["driver"].startswith("smooth-poly")


def test_rerun_from_manifest(tmp_path):
    out = str(tmp_path / "original")
    assert main.main(["solve", "--driver", "smooth-poly:N=64", "--out", out]) == 0
    first = (tmp_path / "original_solution.csv").read_text()
    (tmp_path / "original_solution.csv").unlink()
    assert main.main(["--from-manifest", out + "_manifest.json"]) == 0
    assert (tmp_path / "original_solution.csv").read_text() == first
    assert main.main(["--from-manifest", str(tmp_path / "absent.json")]) == 2
