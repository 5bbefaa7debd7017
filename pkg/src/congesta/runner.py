"""Time-integration driver and run artifacts.

A run turns one RunConfig into a directory of artifacts: three CSV series
(steps, energy, congestion), one JSON summary, the snapshot bundle
fields.npz, and the canonical config copy.  Every file embeds the config
hash and code version, all floats print with 17 significant digits, and
the npz writer pins the zip metadata, so repeated runs are bit-identical.

Hard assertions (maximum principle, mass ledger, Fenchel-Young floor,
defect positivity) raise; the solution-class verdicts are soft and land in
the summary.  The verifier reloads a run directory and re-derives every
verdict from the stored fields alone.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from dataclasses import dataclass

import numpy as np

from . import __version__ as CODE_VERSION
from .config import RunConfig, load_config
from .continuity import (
    ContinuitySolver,
    MassLedger,
    MassLedgerBroken,
    assert_max_principle,
    max_principle_bound,
    renormalized_residual,
)
from .congestion import CongestionPressure, congestion_diagnostics
from .domain import (
    build_mesh,
    density_profile,
    extend_uB,
    validate_initial,
    velocity_profile,
)
from .energy import EnergyAuditor, assert_energy_inequality
from .limits import (
    RunRecord,
    SweepPoint,
    compatibility_check,
    dissipative_verdict,
    estimate_defect,
    lemma_equivalence_check,
    run_sweep,
)
from .momentum import (
    FixedPointStall,
    GalerkinBasis,
    MomentumSolver,
    fixed_point_coupler,
)
from .potential import MollifiedPotential, PotentialSpec, stress_field
from .tensors import field_contract, field_deviator, field_norm, field_trace

_MAX_HALVINGS = 5
_ENERGY_TOL = 1e-5


class SolverFailure(Exception):
    """Unrecoverable solver breakdown after all retries."""


class FenchelFloorViolated(Exception):
    """Pointwise Fenchel-Young gap fell below the -1e-8 floor."""


class VerifyError(Exception):
    """Run directory is missing artifacts or they are corrupt."""


# ---------------------------------------------------------------------------
# deterministic serialization helpers


def _f17(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: str, header, rows):
    """RFC-4180 CSV with CRLF rows and 17-digit floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\r\n")
        for row in rows:
            out = []
            for cell in row:
                if isinstance(cell, str):
                    out.append(cell)
                elif isinstance(cell, (bool, np.bool_)):
                    out.append("true" if cell else "false")
                elif isinstance(cell, (int, np.integer)):
                    out.append(str(int(cell)))
                else:
                    out.append(_f17(cell))
            fh.write(",".join(out) + "\r\n")


def _read_csv(path: str) -> dict:
    """Columns of a run CSV as arrays (floats where possible)."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\r\n") if ln]
    except OSError as exc:
        raise VerifyError(f"missing artifact {path}: {exc}") from exc
    if not lines:
        raise VerifyError(f"empty artifact {path}")
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise VerifyError(f"corrupt row in {path}: {ln!r}")
        for h, p in zip(header, parts):
            cols[h].append(p)
    out = {}
    for h, vals in cols.items():
        try:
            out[h] = np.array([float(v) for v in vals])
        except ValueError:
            out[h] = np.array(vals)
    return out


def _write_npz(path: str, arrays: dict):
    """npz with pinned zip timestamps so bytes are reproducible."""
    from numpy.lib import format as npformat

    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            npformat.write_array(
                buf, np.asarray(arrays[name]), allow_pickle=False
            )
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def _json_dump(path: str, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    return x


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class Problem:
    """All solver objects for one configuration."""

    cfg: RunConfig
    mesh: object
    bd: object
    potential: object
    pressure: object
    basis: object
    cont: object
    mom: object
    auditor: object
    rho0: np.ndarray
    u0: np.ndarray
    v0: np.ndarray
    e0: float


def build_problem(cfg: RunConfig) -> Problem:
    """Instantiate mesh, data, and solvers for a validated config."""
    res = cfg.resolution[0] if cfg.dim == 1 else cfg.resolution
    mesh = build_mesh(cfg.dim, res, cfg.boundary)
    bd = extend_uB(mesh, cfg.boundary, cfg.rhob)
    spec = PotentialSpec(
        mu0=cfg.mu0, mu1=cfg.mu1, eta0=cfg.eta0, eta1=cfg.eta1, q=cfg.q
    )
    spec.validate_for_dim(cfg.dim)
    potential = MollifiedPotential(spec, cfg.delta)
    pressure = CongestionPressure(cfg.alpha, cfg.rho_star)
    basis = GalerkinBasis(mesh, cfg.modes)
    cont = ContinuitySolver(mesh, cfg.rhob, cfg.eps)
    mom = MomentumSolver(mesh, basis, potential, pressure, bd, cfg.eps)
    auditor = EnergyAuditor(mom)

    rho0 = density_profile(cfg.density_spec, mesh)
    u0 = velocity_profile(cfg.velocity_spec, mesh)
    if not cfg.freeze_density:
        # frozen-density studies may start saturated (rho = 1), so the
        # sub-unit mean check only applies when transport is active
        validate_initial(mesh, rho0, rho0[:, None] * u0)
    v0 = mom.initial_coefficients(u0)
    e0 = 0.5 * float(v0 @ mom.mass_matrix(rho0) @ v0) + float(
        mesh.cell_volume * np.sum(pressure.potential(rho0))
    )
    return Problem(
        cfg=cfg,
        mesh=mesh,
        bd=bd,
        potential=potential,
        pressure=pressure,
        basis=basis,
        cont=cont,
        mom=mom,
        auditor=auditor,
        rho0=rho0,
        u0=u0,
        v0=v0,
        e0=e0,
    )


def _stress_at_centers(prob: Problem, tables, v):
    """Constructive stress at cell centers from coefficients."""
    val, grad, ubv, ubg = tables
    dim = prob.mesh.dim
    g = ubg + np.einsum("piab,i->pab", grad, v)
    ncomp = dim * (dim + 1) // 2
    sym = np.empty(g.shape[:-2] + (ncomp,))
    sym[..., 0] = g[..., 0, 0]
    if dim == 2:
        sym[..., 1] = g[..., 1, 1]
        sym[..., 2] = 0.5 * (g[..., 0, 1] + g[..., 1, 0])
    dev = field_deviator(sym, dim)
    return stress_field(
        prob.potential, field_norm(dev, dim), field_trace(sym, dim), dev, dim
    )


# ---------------------------------------------------------------------------
# the run driver


class RunDriver:
    """Integrates one configuration and writes its artifact directory."""

    def __init__(self, cfg: RunConfig, outdir: str):
        self.cfg = cfg
        self.outdir = outdir
        self.prob = build_problem(cfg)
        pts = self.prob.mesh.centers
        self.center_tables = (
            self.prob.basis.mode_values(pts),
            self.prob.basis.mode_grads(pts),
            self.prob.bd.extension.value(pts),
            self.prob.bd.extension.grad(pts),
        )

    # -- single accepted substep -------------------------------------------

    def _substep(self, rho, v, dt):
        """Advance both fields by dt; returns the step products."""
        cfg = self.cfg
        prob = self.prob
        if cfg.freeze_velocity:
            face_vel = prob.mom.face_velocities(v)
            report = prob.cont.step(rho, face_vel, dt)
            return report, v, None, 0, face_vel
        cont = None if cfg.freeze_density else prob.cont
        return fixed_point_coupler(
            cont,
            prob.mom,
            rho,
            v,
            dt,
            tol=cfg.picard_tol,
            max_iter=cfg.picard_max,
        )

    def execute(self) -> RunRecord:
        cfg = self.cfg
        prob = self.prob
        mesh = prob.mesh
        vol = mesh.cell_volume
        os.makedirs(self.outdir, exist_ok=True)

        rho = np.array(prob.rho0, dtype=float)
        v = np.array(prob.v0, dtype=float)
        t = 0.0
        step_index = 0
        divmax_running = 0.0
        amp_running = 1.0
        rho0_max = float(np.max(rho))
        ub_sup = prob.bd.sup_norm()
        data_max = max(rho0_max, cfg.rhob, ub_sup)
        ledger = MassLedger(mesh, rho)
        mass_prev = ledger.mass0

        steps_rows = []
        energy_rows = []
        cong_rows = []
        snap_ts = [0.0]
        snap_rho = [rho.copy()]
        snap_v = [v.copy()]
        snap_stress = [_stress_at_centers(prob, self.center_tables, v)]
        energy_cols = None
        verdict_failures = 0
        max_iters_seen = 0
        nsteps_macro = int(round(cfg.horizon / cfg.dt))
        horizon = nsteps_macro * cfg.dt

        for macro in range(nsteps_macro):
            pending = [(cfg.dt, 0)]
            while pending:
                dt_i, depth = pending.pop(0)
                try:
                    report, v_new, data, iters, face_vel = self._substep(
                        rho, v, dt_i
                    )
                except FixedPointStall:
                    if depth >= _MAX_HALVINGS:
                        raise SolverFailure(
                            f"fixed point stalled at dt={dt_i:.3e} after "
                            f"{_MAX_HALVINGS} halvings (t={t:.6f})"
                        ) from None
                    pending.insert(0, (dt_i / 2.0, depth + 1))
                    pending.insert(1, (dt_i / 2.0, depth + 1))
                    continue

                step_index += 1
                t += dt_i
                max_iters_seen = max(max_iters_seen, iters)
                rho_new = report.rho_new if report is not None else rho

                # mass ledger (hard)
                if report is not None:
                    ledger.record(report)
                    mass_now = float(rho_new.sum() * vol)
                    step_resid = (
                        (mass_now - mass_prev)
                        - report.mass_in
                        + report.mass_out
                    )
                    scale = max(1.0, ledger.mass0 + ledger.total_in)
                    if abs(step_resid) > 1e-10 * scale:
                        raise MassLedgerBroken(
                            f"step mass residual {step_resid:.3e} at t={t:.6f}"
                        )
                    cum_resid = ledger.residual(rho_new)
                    mass_prev = mass_now
                    divmax_running = max(divmax_running, report.div_max)
                    div_h = report.div_h
                    compress = max(0.0, -float(np.min(div_h)))
                    renorm_raw = renormalized_residual(
                        prob.cont, rho, rho_new, face_vel, dt_i, "square"
                    )
                else:
                    mass_now = mass_prev
                    step_resid = 0.0
                    cum_resid = 0.0
                    div_h = np.zeros(mesh.ncells)
                    compress = 0.0
                    renorm_raw = 0.0

                # maximum principle (hard); the per-step assert uses the
                # sharp backward Euler amplification prod 1/(1 - dt c_n),
                # which the exponential envelope only dominates in the
                # dt -> 0 limit
                fac = 1.0 - dt_i * compress
                amp_running = amp_running / fac if fac > 0.0 else np.inf
                bound = max_principle_bound(
                    rho0_max, cfg.rhob, ub_sup, t, divmax_running
                )
                bound_discrete = data_max * amp_running
                assert_max_principle(rho_new, max(bound, bound_discrete))

                # energy ledger and verdict (soft), Fenchel floor (hard)
                led = prob.auditor.ledger(
                    rho,
                    rho_new,
                    v,
                    v_new,
                    dt_i,
                    mom_data=data,
                    face_vel=face_vel,
                )
                verdict = assert_energy_inequality(
                    led, tol=_ENERGY_TOL, e0=prob.e0
                )
                if not verdict.ok:
                    verdict_failures += 1
                if led.fenchel_gap_min < -1e-8:
                    raise FenchelFloorViolated(
                        f"gap {led.fenchel_gap_min:.3e} at t={t:.6f}"
                    )

                crep = congestion_diagnostics(
                    mesh, rho_new, div_h, prob.pressure, cfg.tau_c
                )

                steps_rows.append(
                    [
                        step_index,
                        t,
                        dt_i,
                        iters,
                        float(np.max(rho_new)),
                        float(np.min(rho_new)),
                        bound,
                        bound_discrete,
                        mass_now,
                        report.mass_in if report is not None else 0.0,
                        report.mass_out if report is not None else 0.0,
                        step_resid,
                        cum_resid,
                        report.div_max if report is not None else 0.0,
                        compress,
                        renorm_raw,
                        float(np.linalg.norm(v_new)),
                        report.solver_residual if report is not None else 0.0,
                    ]
                )
                cols = led.columns()
                if energy_cols is None:
                    energy_cols = list(cols)
                energy_rows.append(
                    [step_index, t, dt_i]
                    + [cols[k] for k in energy_cols]
                    + [verdict.ok]
                )
                cong_rows.append(
                    [
                        step_index,
                        t,
                        crep.overshoot_l1,
                        crep.overshoot_l2,
                        crep.overshoot_l4,
                        crep.overshoot_linf,
                        crep.congested_div_l2,
                        crep.complementarity,
                        crep.pressure_mass,
                        crep.congested_fraction,
                    ]
                )

                rho = rho_new
                v = v_new

            if (macro + 1) % cfg.snapshot_stride == 0 or macro == nsteps_macro - 1:
                snap_ts.append(t)
                snap_rho.append(rho.copy())
                snap_v.append(v.copy())
                snap_stress.append(
                    _stress_at_centers(prob, self.center_tables, v)
                )
                u_cells = self.center_tables[2] + np.einsum(
                    "pid,i->pd", self.center_tables[0], v
                )
                estimate_defect(
                    mesh, rho, u_cells, cfg.defect_blocks, cfg.d_lower, cfg.d_upper
                )

        record = self._build_record(
            np.array(snap_ts),
            np.array(snap_rho),
            np.array(snap_v),
            np.array(snap_stress),
            steps_rows,
            energy_rows,
            energy_cols,
            cong_rows,
        )
        summary = self._summarize(
            record, verdict_failures, max_iters_seen, horizon
        )
        self._write_artifacts(record, summary, energy_cols, steps_rows,
                              energy_rows, cong_rows)
        self.summary = summary
        return record

    # -- record/summary assembly -------------------------------------------

    _STEP_HEADER = [
        "step",
        "t",
        "dt",
        "picard_iters",
        "max_rho",
        "min_rho",
        "max_principle_bound",
        "bound_discrete",
        "mass",
        "mass_in",
        "mass_out",
        "mass_step_residual",
        "mass_cum_residual",
        "div_max",
        "div_compress",
        "renorm_residual",
        "vnorm",
        "solver_residual",
    ]
    _CONG_HEADER = [
        "step",
        "t",
        "overshoot_l1",
        "overshoot_l2",
        "overshoot_l4",
        "overshoot_linf",
        "congested_div_l2",
        "complementarity",
        "pressure_mass",
        "congested_fraction",
    ]

    def _build_record(
        self,
        ts,
        rho,
        vcoef,
        stress,
        steps_rows,
        energy_rows,
        energy_cols,
        cong_rows,
    ) -> RunRecord:
        cfg = self.cfg
        prob = self.prob

        def colmap(header, rows):
            arr = np.array(
                [[float(c) if not isinstance(c, str) else np.nan for c in r] for r in rows]
            ) if rows else np.zeros((0, len(header)))
            return {h: arr[:, i] for i, h in enumerate(header)}

        steps = colmap(self._STEP_HEADER, steps_rows)
        eh = ["step", "t", "dt"] + list(energy_cols or []) + ["verdict_ok"]
        energy = colmap(eh, energy_rows)
        cong = colmap(self._CONG_HEADER, cong_rows)
        return RunRecord(
            mesh=prob.mesh,
            bd=prob.bd,
            basis=prob.basis,
            potential=prob.potential,
            pressure=prob.pressure,
            mom=prob.mom,
            ts=ts,
            rho=rho,
            vcoef=vcoef,
            stress_cells=stress,
            steps=steps,
            energy=energy,
            congestion=cong,
            e0=prob.e0,
            dt=cfg.dt,
            eps=cfg.eps,
            tau_c=cfg.tau_c,
            d_lower=cfg.d_lower,
            d_upper=cfg.d_upper,
            config_hash=cfg.config_hash(),
            code_version=CODE_VERSION,
        )

    def _summarize(self, record, verdict_failures, max_iters, horizon) -> dict:
        cfg = self.cfg
        prob = self.prob
        mesh = prob.mesh
        vol = mesh.cell_volume
        last = len(record.ts) - 1
        u_last = record.velocity_cells(last)
        est = estimate_defect(
            mesh,
            record.rho[last],
            u_last,
            cfg.defect_blocks,
            cfg.d_lower,
            cfg.d_upper,
        )
        div_last = record.divergence_cells(last)
        lemma = lemma_equivalence_check(
            mesh,
            record.rho[last],
            div_last,
            cfg.rho_star,
            cfg.tau_c,
        )
        dissip = dissipative_verdict(record)
        compat = compatibility_check(record)

        resid_dual = record.energy.get("residual_dual", np.zeros(1))
        energy_margin = float(max(np.max(np.cumsum(resid_dual)), 0.0))
        kin = record.energy.get("kinetic", np.zeros(1))
        over = record.congestion.get("overshoot_l2", np.zeros(1))
        summary = {
            "name": cfg.name,
            "config_hash": record.config_hash,
            "code_version": CODE_VERSION,
            "seed": cfg.seed,
            "dim": cfg.dim,
            "resolution": list(cfg.resolution),
            "dt": cfg.dt,
            "horizon": horizon,
            "eps": cfg.eps,
            "alpha": cfg.alpha,
            "delta": cfg.delta,
            "modes": cfg.modes,
            "steps": int(len(record.steps.get("t", []))),
            "snapshots": int(len(record.ts)),
            "e0": record.e0,
            "energy_terminal": float(
                kin[-1]
                + record.energy.get("pressure_potential", np.zeros(1))[-1]
            )
            if kin.size
            else record.e0,
            "kinetic_terminal": float(kin[-1]) if kin.size else 0.0,
            "energy_margin": energy_margin,
            "energy_verdict_failures": int(verdict_failures),
            "max_picard_iters": int(max_iters),
            "rho_max": float(np.max(record.rho)),
            "rho_min": float(np.min(record.rho)),
            "mass_cum_residual": float(
                record.steps.get("mass_cum_residual", np.zeros(1))[-1]
            )
            if record.steps.get("mass_cum_residual", np.zeros(1)).size
            else 0.0,
            "overshoot_l2": float(over[-1]) if over.size else 0.0,
            "terminal_drift": float(
                vol * np.sum(np.abs(record.rho[-1] - record.rho[0]))
            ),
            "defect_max": est.max_trace,
            "defect_ratio_bounds_ok": est.ratio_bounds_ok,
            "lemma": {
                "constraint_holds": lemma.constraint_holds,
                "divergence_free_on_congested": lemma.divergence_free_on_congested,
                "consistent": lemma.consistent,
                "overshoot_linf": lemma.overshoot_linf,
                "congested_div_l2": lemma.congested_div_l2,
            },
            "dissipative": dissip.as_dict(),
            "compatibility": {
                "compatible": compat.compatible,
                "defect_max": compat.defect_max,
                "gap_rel_max": compat.gap_rel_max,
                "congested_pairing": compat.congested_pairing,
                "energy_ok": compat.energy_ok,
            },
        }
        return _jsonable(summary)

    def _write_artifacts(
        self, record, summary, energy_cols, steps_rows, energy_rows, cong_rows
    ):
        cfg = self.cfg
        tail = [record.config_hash, CODE_VERSION]
        _write_csv(
            os.path.join(self.outdir, "steps.csv"),
            self._STEP_HEADER + ["config_hash", "code_version"],
            [r + tail for r in steps_rows],
        )
        eh = ["step", "t", "dt"] + list(energy_cols or []) + ["verdict_ok"]
        _write_csv(
            os.path.join(self.outdir, "energy.csv"),
            eh + ["config_hash", "code_version"],
            [r + tail for r in energy_rows],
        )
        _write_csv(
            os.path.join(self.outdir, "congestion.csv"),
            self._CONG_HEADER + ["config_hash", "code_version"],
            [r + tail for r in cong_rows],
        )
        _json_dump(os.path.join(self.outdir, "summary.json"), summary)
        _write_npz(
            os.path.join(self.outdir, "fields.npz"),
            {
                "ts": record.ts,
                "rho": record.rho,
                "vcoef": record.vcoef,
                "stress_cells": record.stress_cells,
                "config_hash": np.array(record.config_hash),
                "code_version": np.array(CODE_VERSION),
            },
        )
        with open(
            os.path.join(self.outdir, "config_used.cfg"), "w", encoding="utf-8"
        ) as fh:
            fh.write(f"# config_hash = {record.config_hash}\n")
            fh.write(f"# code_version = {CODE_VERSION}\n")
            fh.write(cfg.canonical_text())


# ---------------------------------------------------------------------------
# reload + verify


def load_run(run_dir: str) -> tuple:
    """Rebuild a RunRecord and its summary from stored artifacts only."""
    cfg_path = os.path.join(run_dir, "config_used.cfg")
    if not os.path.exists(cfg_path):
        raise VerifyError(f"missing artifact {cfg_path}")
    try:
        cfg = load_config(cfg_path)
    except Exception as exc:
        raise VerifyError(f"corrupt config copy: {exc}") from exc
    try:
        prob = build_problem(cfg)
    except Exception as exc:
        raise VerifyError(f"config copy does not rebuild: {exc}") from exc

    sum_path = os.path.join(run_dir, "summary.json")
    try:
        with open(sum_path, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise VerifyError(f"missing or corrupt {sum_path}: {exc}") from exc

    npz_path = os.path.join(run_dir, "fields.npz")
    try:
        with np.load(npz_path, allow_pickle=False) as z:
            ts = z["ts"]
            rho = z["rho"]
            vcoef = z["vcoef"]
            stress = z["stress_cells"]
            stored_hash = str(z["config_hash"])
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise VerifyError(f"missing or corrupt {npz_path}: {exc}") from exc

    if rho.shape[0] != ts.shape[0] or vcoef.shape[0] != ts.shape[0]:
        raise VerifyError("snapshot arrays disagree on length")
    if rho.shape[1] != prob.mesh.ncells:
        raise VerifyError("density snapshots do not match the mesh")

    steps = _read_csv(os.path.join(run_dir, "steps.csv"))
    energy = _read_csv(os.path.join(run_dir, "energy.csv"))
    cong = _read_csv(os.path.join(run_dir, "congestion.csv"))
    for label, table in (("steps", steps), ("energy", energy), ("congestion", cong)):
        if not table or min(len(v) for v in table.values()) == 0:
            raise VerifyError(f"artifact table {label}.csv has no data rows")
    for need, cols in (
        ("max_rho", steps),
        ("mass_cum_residual", steps),
        ("renorm_residual", steps),
        ("residual_dual", energy),
        ("complementarity", cong),
    ):
        if need not in cols:
            raise VerifyError(f"artifact column {need!r} missing")

    record = RunRecord(
        mesh=prob.mesh,
        bd=prob.bd,
        basis=prob.basis,
        potential=prob.potential,
        pressure=prob.pressure,
        mom=prob.mom,
        ts=ts,
        rho=rho,
        vcoef=vcoef,
        stress_cells=stress,
        steps=steps,
        energy=energy,
        congestion=cong,
        e0=float(summary.get("e0", prob.e0)),
        dt=cfg.dt,
        eps=cfg.eps,
        tau_c=cfg.tau_c,
        d_lower=cfg.d_lower,
        d_upper=cfg.d_upper,
        config_hash=stored_hash,
        code_version=str(summary.get("code_version", CODE_VERSION)),
    )
    return record, summary, cfg


def verify_run(run_dir: str, write_report: bool = True) -> dict:
    """Re-derive every verdict from stored fields; never re-simulates."""
    record, summary, cfg = load_run(run_dir)
    mesh = record.mesh

    hard = {}
    # per-step: sharp discrete amplification, rebuilt from the stored
    # dt and compression columns; end of run: the exponential envelope
    data_max = max(
        float(np.max(record.rho[0])),
        cfg.rhob,
        record.bd.sup_norm(),
    )
    dts = record.steps["dt"]
    comp = record.steps["div_compress"]
    amp = np.cumprod(1.0 / np.maximum(1.0 - dts * comp, 1e-300))
    per_step = np.maximum(
        record.steps["max_principle_bound"], data_max * amp
    )
    tau = float(record.steps["t"][-1])
    envelope = max_principle_bound(
        float(np.max(record.rho[0])),
        cfg.rhob,
        record.bd.sup_norm(),
        tau,
        float(np.max(record.steps["div_max"])),
    )
    hard["max_principle_ok"] = bool(
        np.all(
            record.steps["max_rho"] <= per_step * (1.0 + 1e-10) + 1e-12
        )
        and float(np.max(record.steps["max_rho"]))
        <= envelope * (1.0 + 1e-10) + 1e-12
        and float(np.min(record.steps["min_rho"])) >= -1e-12
    )
    scale = max(1.0, float(record.steps["mass"].max()))
    hard["mass_ledger_ok"] = bool(
        np.all(np.abs(record.steps["mass_step_residual"]) <= 1e-10 * scale)
        and abs(float(record.steps["mass_cum_residual"][-1])) <= 1e-8 * scale
    )

    last = len(record.ts) - 1
    defect_ok = True
    defect_max = 0.0
    try:
        est = estimate_defect(
            mesh,
            record.rho[last],
            record.velocity_cells(last),
            cfg.defect_blocks,
            cfg.d_lower,
            cfg.d_upper,
        )
        defect_max = est.max_trace
    except Exception:
        defect_ok = False
    hard["defect_nonnegative_ok"] = defect_ok

    # stored-stress energy verdict: Fenchel gap of stress against strain
    gap_ok = True
    gap_worst = 0.0
    pot = record.potential
    dim = mesh.dim
    for k in range(len(record.ts)):
        du = record.strain_cells(k)
        s = record.stress_cells[k]
        dev = field_deviator(du, dim)
        f_p = pot.phi(field_norm(dev, dim)) + pot.psi(field_trace(du, dim))
        dev_s = field_deviator(s, dim)
        f_d = pot.phistar(field_norm(dev_s, dim)) + pot.psistar(
            field_trace(s, dim) / dim
        )
        gap = (f_p + f_d - field_contract(s, du, dim)) / (
            1.0 + np.abs(f_p) + np.abs(f_d)
        )
        gap_worst = max(gap_worst, float(np.max(gap)))
    gap_ok = gap_worst <= 1e-5
    hard["fenchel_floor_ok"] = bool(
        float(np.min(record.energy["fenchel_gap_min"])) >= -1e-8
    )

    resid_dual = record.energy["residual_dual"]
    energy_ok = bool(
        np.all(resid_dual <= _ENERGY_TOL * (1.0 + record.e0)) and gap_ok
    )

    dissip = dissipative_verdict(record)
    lemma = lemma_equivalence_check(
        mesh,
        record.rho[last],
        record.divergence_cells(last),
        record.pressure.rho_star,
        cfg.tau_c,
    )
    compat = compatibility_check(record)

    report = {
        "run": os.path.basename(os.path.normpath(run_dir)),
        "config_hash": record.config_hash,
        "code_version": record.code_version,
        "verifier_version": CODE_VERSION,
        "hard": hard,
        "hard_ok": bool(all(hard.values())),
        "energy_verdict_ok": energy_ok,
        "stored_stress_gap_rel_max": gap_worst,
        "defect_max": defect_max,
        "dissipative": dissip.as_dict(),
        "lemma": {
            "constraint_holds": lemma.constraint_holds,
            "divergence_free_on_congested": lemma.divergence_free_on_congested,
            "consistent": lemma.consistent,
            "overshoot_linf": lemma.overshoot_linf,
            "congested_div_l2": lemma.congested_div_l2,
        },
        "compatibility": {
            "compatible": compat.compatible,
            "defect_max": compat.defect_max,
            "gap_rel_max": compat.gap_rel_max,
            "congested_pairing": compat.congested_pairing,
            "energy_ok": compat.energy_ok,
        },
        "summary_config_hash_matches": bool(
            summary.get("config_hash") == record.config_hash
        ),
    }
    report = _jsonable(report)
    if write_report:
        _json_dump(os.path.join(run_dir, "verify_report.json"), report)
    return report


# ---------------------------------------------------------------------------
# sweep execution


def execute_point(point: SweepPoint, base_cfg: RunConfig, outdir: str) -> dict:
    """Run one sweep point in its own subdirectory; returns the summary."""
    import copy

    cfg = copy.deepcopy(base_cfg)
    cfg.alpha = point.alpha
    cfg.delta = point.delta
    cfg.eps = point.eps
    cfg.modes = int(point.n)
    cfg.dt = point.dt
    if isinstance(point.resolution, (list, tuple)):
        cfg.resolution = tuple(int(r) for r in point.resolution)
    else:
        cfg.resolution = tuple([int(point.resolution)] * cfg.dim)
    cfg.sweep = {}
    tag = (
        f"alpha{point.alpha:g}_delta{point.delta:g}_eps{point.eps:g}"
        f"_n{point.n}_N{'x'.join(str(r) for r in cfg.resolution)}_dt{point.dt:g}"
    )
    sub = os.path.join(outdir, tag)
    driver = RunDriver(cfg, sub)
    driver.execute()
    return driver.summary


class _PointRunner:
    """Picklable closure binding the base config and output directory."""

    def __init__(self, base_cfg: RunConfig, outdir: str):
        self.base_cfg = base_cfg
        self.outdir = outdir

    def __call__(self, point: SweepPoint) -> dict:
        return execute_point(point, self.base_cfg, self.outdir)


def execute_sweep(cfg: RunConfig, outdir: str, workers: int = 1):
    """Cartesian sweep over the configured axes; writes the sweep report."""
    os.makedirs(outdir, exist_ok=True)
    axes = cfg.sweep or {}
    alphas = axes.get("alpha", [cfg.alpha])
    deltas = axes.get("delta", [cfg.delta])
    epss = axes.get("eps", [cfg.eps])
    ns = [int(n) for n in axes.get("modes", [cfg.modes])]
    dts = axes.get("dt", [cfg.dt])
    resolutions = axes.get("resolution")
    if resolutions is None:
        res_list = [cfg.resolution]
    else:
        res_list = [tuple([int(r)] * cfg.dim) for r in resolutions]
    points = []
    for a in alphas:
        for d in deltas:
            for e in epss:
                for n in ns:
                    for res in res_list:
                        for dt in dts:
                            points.append(
                                SweepPoint(
                                    delta=float(d),
                                    eps=float(e),
                                    alpha=float(a),
                                    n=int(n),
                                    resolution=list(res),
                                    dt=float(dt),
                                )
                            )
    report = run_sweep(points, _PointRunner(cfg, outdir), workers=workers)
    payload = _jsonable(report.as_dict())
    payload["config_hash"] = cfg.config_hash()
    payload["code_version"] = CODE_VERSION
    _json_dump(os.path.join(outdir, "sweep_report.json"), payload)

    rows = []
    for p in report.points:
        if p.status != "done":
            continue
        tag = (
            f"alpha{p.alpha:g}_delta{p.delta:g}_eps{p.eps:g}"
            f"_n{p.n}_N{'x'.join(str(int(r)) for r in p.resolution)}_dt{p.dt:g}"
        )
        cong = _read_csv(os.path.join(outdir, tag, "congestion.csv"))
        for i in range(len(cong["t"])):
            rows.append(
                [
                    p.alpha,
                    p.delta,
                    p.eps,
                    p.n,
                    cong["t"][i],
                    cong["overshoot_l1"][i],
                    cong["overshoot_l2"][i],
                    cong["overshoot_l4"][i],
                    cong["complementarity"][i],
                    cong["congested_div_l2"][i],
                    cong["pressure_mass"][i],
                ]
            )
    _write_csv(
        os.path.join(outdir, "sweep_table.csv"),
        [
            "alpha",
            "delta",
            "eps",
            "modes",
            "t",
            "overshoot_l1",
            "overshoot_l2",
            "overshoot_l4",
            "complementarity",
            "congested_divergence",
            "pressure_mass",
            "config_hash",
            "code_version",
        ],
        [r + [cfg.config_hash(), CODE_VERSION] for r in rows],
    )
    return report
