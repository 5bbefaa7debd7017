"""Command line front end: run, sweep, verify.

Exit codes: 0 when all hard assertions pass (soft verdicts never change
the exit code), 2 for configuration errors or missing/corrupt artifacts,
3 for a hard assertion failure (maximum principle, mass ledger,
Fenchel-Young floor, defect positivity), 4 for solver breakdown after all
retries.  The only environment override honored is CONGESTA_OUT for the
output directory; everything else comes from the config file.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .continuity import (
    LinearSolveFailure,
    MassLedgerBroken,
    MaxPrincipleViolated,
    NonMonotoneScheme,
)
from .domain import (
    InvalidBoundarySpec,
    MassExceedsOne,
    MomentumOnVacuum,
    NegativeFlux,
)
from .limits import NegativeDefect
from .momentum import NewtonDivergence, SingularMassMatrix
from .runner import (
    FenchelFloorViolated,
    RunDriver,
    SolverFailure,
    VerifyError,
    execute_sweep,
    verify_run,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HARD = 3
EXIT_SOLVER = 4

_CONFIG_ERRORS = (
    ConfigError,
    InvalidBoundarySpec,
    NegativeFlux,
    MassExceedsOne,
    MomentumOnVacuum,
    ValueError,
)
_HARD_ERRORS = (
    MaxPrincipleViolated,
    MassLedgerBroken,
    NegativeDefect,
    FenchelFloorViolated,
    NonMonotoneScheme,
)
_SOLVER_ERRORS = (
    SolverFailure,
    LinearSolveFailure,
    SingularMassMatrix,
    NewtonDivergence,
)


def _resolve_outdir(cfg, flag_value, default_root="runs"):
    if flag_value:
        return flag_value
    env = os.environ.get("CONGESTA_OUT")
    if env:
        return os.path.join(env, cfg.name)
    if cfg.outdir:
        return cfg.outdir
    return os.path.join(default_root, cfg.name)


def run(config_path: str, out: str = None, workers: int = 1) -> int:
    """Execute one configuration; returns the process exit code."""
    del workers  # single runs are sequential; accepted for interface parity
    try:
        cfg = load_config(config_path)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _resolve_outdir(cfg, out)
    try:
        driver = RunDriver(cfg, outdir)
        driver.execute()
    except _HARD_ERRORS as exc:
        print(f"hard assertion failed: {exc}", file=sys.stderr)
        return EXIT_HARD
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    s = driver.summary
    print(
        f"run {cfg.name}: {s['steps']} steps, rho in "
        f"[{s['rho_min']:.6g}, {s['rho_max']:.6g}], "
        f"energy margin {s['energy_margin']:.3e}, artifacts in {outdir}"
    )
    return EXIT_OK


def sweep(config_path: str, out: str = None, workers: int = 1) -> int:
    """Execute the configured parameter sweep."""
    try:
        cfg = load_config(config_path)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not cfg.sweep:
        print(
            f"config error: {config_path}: no [sweep] section with axes",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    outdir = _resolve_outdir(cfg, out, default_root="sweeps")
    report = execute_sweep(cfg, outdir, workers=max(1, workers))
    ndone = sum(1 for p in report.points if p.status == "done")
    print(
        f"sweep {cfg.name}: {ndone}/{len(report.points)} points done, "
        f"report in {outdir}"
    )
    if report.failures:
        hard_names = {e.__name__ for e in _HARD_ERRORS}
        solver_names = {e.__name__ for e in _SOLVER_ERRORS}
        kinds = {f["error"].split(":", 1)[0] for f in report.failures}
        for f in report.failures:
            print(f"point {f['index']} failed: {f['error']}", file=sys.stderr)
        if kinds & hard_names:
            return EXIT_HARD
        if kinds & solver_names:
            return EXIT_SOLVER
        return EXIT_CONFIG
    return EXIT_OK


def verify(run_dir: str) -> dict:
    """Re-derive all verdicts of a stored run; raises VerifyError."""
    return verify_run(run_dir)


def _cmd_verify(run_dir: str) -> int:
    try:
        report = verify(run_dir)
    except VerifyError as exc:
        print(f"verify error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(
        f"verify {report['run']}: hard_ok={report['hard_ok']} "
        f"energy_ok={report['energy_verdict_ok']} "
        f"compatible={report['compatibility']['compatible']}"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="congesta",
        description="Congestion-constrained viscous flow: run, sweep, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    p_run.add_argument("config", help="path to the run config file")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="run the configured ladder")
    p_sweep.add_argument("config", help="path to the sweep config file")
    p_sweep.add_argument("--out", default=None, help="output directory")
    p_sweep.add_argument("--workers", type=int, default=1)

    p_verify = sub.add_parser("verify", help="re-check a stored run")
    p_verify.add_argument("run_dir", help="artifact directory of a run")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, out=args.out, workers=args.workers)
    if args.command == "sweep":
        return sweep(args.config, out=args.out, workers=args.workers)
    return _cmd_verify(args.run_dir)


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
