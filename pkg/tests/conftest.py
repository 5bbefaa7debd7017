"""Shared fixtures: benchmark runs executed once per session.

The acceptance suite reuses these directories across criteria, so the
whole matrix (single benchmarks, the alpha ladder, and the dt-refinement
runs) is simulated exactly once.  Every fixture records wall-clock time
so runtime budgets can be asserted where a criterion pins one.
"""

from __future__ import annotations

import copy
import glob
import os
import time

import pytest

from congesta.config import load_config
from congesta.runner import RunDriver, execute_sweep, verify_run

BENCH_DIR = os.path.normpath(
    os.path.join(os.path.dirname(__file__), "..", "bench")
)

SINGLE_BENCHES = [
    "uniform",
    "inflow",
    "linear_mode",
    "heat",
    "transport",
    "congested",
    "smooth",
    "channel2d",
    "mixing2d",
]


def bench_config(name: str):
    return load_config(os.path.join(BENCH_DIR, name + ".cfg"))


@pytest.fixture(scope="session")
def bench_runs(tmp_path_factory):
    """All single benchmarks: name -> {dir, wall, summary}."""
    root = tmp_path_factory.mktemp("bench_runs")
    out = {}
    for name in SINGLE_BENCHES:
        cfg = bench_config(name)
        outdir = str(root / name)
        t0 = time.perf_counter()
        driver = RunDriver(cfg, outdir)
        driver.execute()
        wall = time.perf_counter() - t0
        out[name] = {"dir": outdir, "wall": wall, "summary": driver.summary}
    return out


@pytest.fixture(scope="session")
def ladder_run(tmp_path_factory):
    """The alpha sweep: {dir, wall, points} with points sorted by alpha."""
    root = str(tmp_path_factory.mktemp("ladder"))
    cfg = bench_config("alpha_ladder")
    t0 = time.perf_counter()
    execute_sweep(cfg, root, workers=1)
    wall = time.perf_counter() - t0
    points = sorted(
        (p for p in glob.glob(os.path.join(root, "alpha*")) if os.path.isdir(p)),
        key=lambda p: float(os.path.basename(p).split("alpha")[1].split("_")[0]),
    )
    assert len(points) == 3
    return {"dir": root, "wall": wall, "points": points}


@pytest.fixture(scope="session")
def refinement_runs(tmp_path_factory):
    """Inflow benchmark at dt, dt/2, dt/4 over a short horizon."""
    root = tmp_path_factory.mktemp("refine")
    out = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        cfg = bench_config("inflow")
        cfg = copy.deepcopy(cfg)
        cfg.dt = dt
        cfg.horizon = 0.1
        outdir = str(root / f"dt{dt:g}")
        t0 = time.perf_counter()
        driver = RunDriver(cfg, outdir)
        driver.execute()
        wall = time.perf_counter() - t0
        out.append({"dir": outdir, "dt": dt, "wall": wall, "summary": driver.summary})
    return out


@pytest.fixture(scope="session")
def verify_reports(bench_runs, ladder_run):
    """verify() output for every benchmark and ladder point directory."""
    reports = {}
    for name, info in bench_runs.items():
        reports[name] = verify_run(info["dir"])
    for p in ladder_run["points"]:
        reports["ladder:" + os.path.basename(p)] = verify_run(p)
    return reports
