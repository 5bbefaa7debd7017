"""Command line entry points and exit-code contract."""

import json
import os

import pytest

import congesta.cli as cli
from congesta.cli import EXIT_CONFIG, EXIT_HARD, EXIT_OK, EXIT_SOLVER, main
from congesta.continuity import MaxPrincipleViolated
from congesta.runner import SolverFailure

FAST = """\
[domain]
dim = 1
resolution = 32

[boundary]
left = 0.0
right = 0.0
rhob = 0.8

[initial]
density = uniform:value=0.4
velocity = sine:amp=0.5,k=1

[potential]
mu0 = 1.0
eta0 = 0.1
q = 2.0

[scheme]
dt = 1e-3
horizon = 0.02
eps = 0.01
modes = 2
"""

ARTIFACTS = ("steps.csv", "energy.csv", "congestion.csv", "summary.json", "fields.npz")


def write_cfg(tmp_path, text=FAST, name="fast.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_produces_artifacts(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["run", cfg, "--out", out]) == EXIT_OK
    for name in ARTIFACTS:
        assert os.path.exists(os.path.join(out, name)), name
    stdout = capsys.readouterr().out
    assert "run fast:" in stdout and "20 steps" in stdout
    with open(os.path.join(out, "summary.json")) as fh:
        summary = json.load(fh)
    assert summary["steps"] == 20
    assert summary["energy_verdict_failures"] == 0


def test_run_config_error_exit(tmp_path, capsys):
    bad = write_cfg(tmp_path, FAST.replace("[potential]", "[misnamed]"), "bad.cfg")
    assert main(["run", bad]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG


def test_run_hard_failure_exit(tmp_path, monkeypatch, capsys):
    cfg = write_cfg(tmp_path)

    class Exploding:
        def __init__(self, *a, **k):
            pass

        def execute(self):
            raise MaxPrincipleViolated("synthetic bound break")

    monkeypatch.setattr(cli, "RunDriver", Exploding)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_HARD
    assert "hard assertion failed" in capsys.readouterr().err


def test_run_solver_failure_exit(tmp_path, monkeypatch, capsys):
    cfg = write_cfg(tmp_path)

    class Stalling:
        def __init__(self, *a, **k):
            pass

        def execute(self):
            raise SolverFailure("synthetic stall after retries")

    monkeypatch.setattr(cli, "RunDriver", Stalling)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


def test_verify_roundtrip(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["run", cfg, "--out", out]) == EXIT_OK
    assert main(["verify", out]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "hard_ok=True" in stdout
    assert os.path.exists(os.path.join(out, "verify_report.json"))


def test_verify_missing_and_corrupt_artifacts(tmp_path, capsys):
    assert main(["verify", str(tmp_path / "missing")]) == EXIT_CONFIG
    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["run", cfg, "--out", out]) == EXIT_OK
    with open(os.path.join(out, "fields.npz"), "wb") as fh:
        fh.write(b"not a zip archive")
    assert main(["verify", out]) == EXIT_CONFIG
    assert "verify error" in capsys.readouterr().err


def test_verify_detects_tampered_column(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert main(["run", cfg, "--out", out]) == EXIT_OK
    path = os.path.join(out, "steps.csv")
    with open(path, "r", newline="") as fh:
        text = fh.read()
    header = text.split("\r\n", 1)[0]
    with open(path, "w", newline="") as fh:
        fh.write(header + "\r\n")
    assert main(["verify", out]) == EXIT_CONFIG


def test_sweep_requires_axes(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["sweep", cfg, "--out", str(tmp_path / "s")]) == EXIT_CONFIG
    assert "no [sweep] section" in capsys.readouterr().err


def test_sweep_runs_points_parallel(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path, FAST + "\n[sweep]\neps = 0.04, 0.02\n", name="ladder.cfg"
    )
    out = str(tmp_path / "sweep_out")
    assert main(["sweep", cfg, "--out", out, "--workers", "2"]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "2/2 points done" in stdout
    report_path = os.path.join(out, "sweep_report.json")
    assert os.path.exists(report_path)
    with open(report_path) as fh:
        report = json.load(fh)
    assert len(report["points"]) == 2
    assert all(p["status"] == "done" for p in report["points"])
    # per-point artifact directories hold full runs
    dirs = [d for d in os.listdir(out) if os.path.isdir(os.path.join(out, d))]
    assert len(dirs) == 2
    for d in dirs:
        for name in ARTIFACTS:
            assert os.path.exists(os.path.join(out, d, name))


def test_outdir_env_override(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    root = tmp_path / "envroot"
    monkeypatch.setenv("CONGESTA_OUT", str(root))
    assert main(["run", cfg]) == EXIT_OK
    assert (root / "fast" / "summary.json").exists()


def test_console_entry_point_exists():
    assert callable(cli.console_main)
