import json
import subprocess
import sys

import pytest

from grassfol import cli, experiments
from grassfol.exterior import Field
from grassfol.experiments import (
    DEFAULT_SEED,
    ExperimentConfig,
    ExperimentReport,
    GateError,
    ReportRow,
    judge,
    run,
)


def test_config_round_trip_and_schema():
    cfg = ExperimentConfig("marstrand", field="C", n=2, k=0, samples=2000, seed=7, scale_window=(2**-10, 2**-3), fractal="cantor", family="pointed", sigmas=(0.5,))
    back = ExperimentConfig.from_json(json.dumps(cfg.to_dict()))
    assert back == cfg and back.field is Field.COMPLEX
    assert cfg.to_dict()["schema"] == 1
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**cfg.to_dict(), "schema": 2})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**cfg.to_dict(), "colour": "blue"})


@pytest.mark.parametrize(
    "kwargs",
    [
        {"experiment": "nope"},
        {"experiment": "tails", "n": 2, "k": 1},
        {"experiment": "tails", "samples": 999},
        {"experiment": "tails", "scale_window": (0.5, 0.1)},
        {"experiment": "tails", "seed": -1},
        {"experiment": "energy", "sigmas": (-0.5,)},
        {"experiment": "marstrand", "family": "spiral"},
    ],
)
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_resolved_fills_defaults():
    cfg = ExperimentConfig("marstrand").resolved()
    assert (cfg.field, cfg.n, cfg.k, cfg.samples, cfg.centers) == (Field.REAL, 2, 0, 10_000, 20)
    assert cfg.scale_window == (2.0**-12, 2.0**-3)
    assert ExperimentConfig("tails").resolved().samples == 1_000_000


def test_judge():
    assert judge(1.05, 1.0, 0.1, "within") == "PASS"
    assert judge(1.2, 1.0, 0.1, "within") == "FAIL"
    assert judge(0.5, 1.0, 0.1, "at_least") == "FAIL"
    assert judge(3.0, 1.0, 0.1, "at_least") == "PASS"
    assert judge(1.0, 1.0, 0.1, "within", valid=False) == "INVALID"
    assert judge(float("nan"), 1.0, 0.1, "within") == "INVALID"


def test_report_hash_ignores_threads_and_wall_clock():
    row = ReportRow("c", "p", 1.0, 1.01, 0.1, "within", "PASS")
    a = ExperimentReport(ExperimentConfig("tails", threads=1), [row], [{"x": 1}], wall_clock=1.0)
    b = ExperimentReport(ExperimentConfig("tails", threads=4, output_path="x.json"), [row], [{"x": 1}], wall_clock=9.0)
    assert a.audit_hash == b.audit_hash
    c = ExperimentReport(ExperimentConfig("tails"), [row], [{"x": 2}])
    assert c.audit_hash != a.audit_hash
    d = a.to_dict()
    assert d["passed"] and d["raw_rows"] == 1 and "versions" in d and d["audit_hash"] == a.audit_hash
    assert not ExperimentReport(ExperimentConfig("tails"), []).passed


def test_every_row_names_what_it_tests():
    report = run(ExperimentConfig("identities", field="R", n=2, samples=1000))
    for r in report.rows:
        assert r.provenance and r.verdict in ("PASS", "FAIL", "INVALID")
        assert r.predicted is not None and r.tolerance is not None
    assert any(r.case.startswith("product-formula R n=2") for r in report.rows)


def test_identities_are_thread_count_independent():
    a = run(ExperimentConfig("identities", samples=1000, threads=1))
    b = run(ExperimentConfig("identities", samples=1000, threads=3))
    assert a.audit_hash == b.audit_hash


def test_marstrand_small_run_is_thread_count_independent():
    cfg = dict(samples=1500, centers=3, fractal="cantor")
    a = run(ExperimentConfig("marstrand", threads=1, **cfg))
    b = run(ExperimentConfig("marstrand", threads=2, **cfg))
    assert a.audit_hash == b.audit_hash
    assert a.rows[0].detail["centers"] == 3


def test_gate_blocks_monte_carlo(monkeypatch):
    monkeypatch.setattr(experiments, "_gate_status", lambda: (False, ("norm-bound R n=2",)))
    with pytest.raises(GateError):
        run(ExperimentConfig("tails", field="R", n=2, k=0, samples=1000))
    assert cli.main(["tails", "--field", "R", "--n", "2", "--samples", "1000"]) == 3


def test_marstrand_needs_fractal():
    with pytest.raises(ValueError):
        run(ExperimentConfig("marstrand", samples=1000, centers=2))


def test_affine_check_rejects_complex():
    with pytest.raises(ValueError):
        run(ExperimentConfig("affine_check", field="C"))


def args_for(argv):
    return cli.build_parser().parse_args(argv)


def test_seed_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(ExperimentConfig("tails", seed=11).to_dict()))
    assert cli.config_from_args(args_for(["tails", "--config", str(path)]), {}).seed == 11
    assert cli.config_from_args(args_for(["tails", "--config", str(path)]), {"GM_SEED": "12"}).seed == 12
    assert cli.config_from_args(args_for(["tails", "--config", str(path), "--seed", "13"]), {"GM_SEED": "12"}).seed == 13
    assert cli.config_from_args(args_for(["tails"]), {}).seed == DEFAULT_SEED


def test_flags_map_onto_config():
    cfg = cli.config_from_args(
        args_for(["energy", "--field", "C", "--n", "3", "--k", "1", "--window", "2^-10:2^-2", "--sigma", "0.2", "--sigma", "0.9", "--threads", "2", "--fractal", "cantor"]),
        {},
    )
    assert cfg.experiment == "energy" and cfg.field is Field.COMPLEX and (cfg.n, cfg.k) == (3, 1)
    assert cfg.scale_window == (2.0**-10, 2.0**-2) and cfg.sigmas == (0.2, 0.9) and cfg.threads == 2


def test_config_for_other_experiment_is_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(ExperimentConfig("tails").to_dict()))
    assert cli.main(["energy", "--config", str(path)]) == 2


def test_stdout_report_and_exit_code(capsys):
    code = cli.main(["identities", "--field", "R", "--n", "3", "--samples", "1000", "--out", "-"])
    out = json.loads(capsys.readouterr().out)
    assert out["schema"] == 1 and out["config"]["n"] == 3
    assert code == (0 if out["passed"] else 1)
    assert all(r["verdict"] in ("PASS", "FAIL", "INVALID") for r in out["rows"])


def test_file_report_writes_json_and_csv(tmp_path):
    out = tmp_path / "affine.json"
    code = cli.main(["affine-check", "--samples", "2000", "--out", str(out)])
    data = json.loads(out.read_text())
    assert code == 0 and data["passed"]
    assert out.with_suffix(".csv").read_text().startswith("pair,codomain,classical")


def test_module_entry_point(tmp_path):
    env = {"GM_SEED": "5", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run(
        [sys.executable, "-m", "grassfol", "affine-check", "--samples", "1000"],
        capture_output=True,
        text=True,
        env=env,
    )
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)
    assert summary["passed"] is True and len(summary["audit_hash"]) == 64
    again = subprocess.run([sys.executable, "-m", "grassfol", "affine-check", "--samples", "1000"], capture_output=True, text=True, env=env)
    assert json.loads(again.stdout)["audit_hash"] == summary["audit_hash"]
