"""Acceptance matrix: thirteen go/no-go criteria, one verdict line each.

Each test prints a single ``[criterion N] PASS/FAIL`` line with the measured
margins before asserting, so the pytest log doubles as the acceptance report.
Simulation artifacts come from the session-scoped fixtures in conftest.py and
are reused across criteria; checks that need fresh numerics (duality floors,
conjugate tables, synthetic defect fields) compute them inline with seeded
generators.
"""

import math
import os

import numpy as np

from congesta.config import load_config
from congesta.continuity import ContinuitySolver, audit_renormalized, entropy_pair
from congesta.domain import build_mesh
from congesta.limits import (
    compatibility_check,
    estimate_defect,
    lemma_equivalence_check,
)
from congesta.potential import (
    MollifiedPotential,
    PotentialSpec,
    fenchel_gap,
    subgradient,
)
from congesta.runner import RunDriver, load_run, verify_run
from congesta.tensors import SymTensor

BENCH = os.path.normpath(os.path.join(os.path.dirname(__file__), "..", "bench"))
ZERO_1D = {"left": [0.0], "right": [0.0]}
ARTIFACTS = (
    "steps.csv",
    "energy.csv",
    "congestion.csv",
    "summary.json",
    "fields.npz",
    "config_used.cfg",
)


def _report(capsys, num, ok, detail):
    # the one verdict line per criterion; disabled capture makes it show up
    # in the live pytest output, not only on failure
    with capsys.disabled():
        print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num}: {detail}"


def _bench_cfg(name):
    return load_config(os.path.join(BENCH, name + ".cfg"))


def _bytes(run_dir, name):
    with open(os.path.join(run_dir, name), "rb") as fh:
        return fh.read()


def _rand_sym(rng, dim, scale=1.0):
    m = scale * rng.standard_normal((dim, dim))
    return SymTensor.from_matrix(0.5 * (m + m.T))


def _inflow_solver(n=64):
    m = build_mesh(1, n, {"left": [0.5], "right": [0.5]})
    solver = ContinuitySolver(m, rhob=0.8, eps=0.01)
    return m, solver, np.full(n, 0.2), [np.full(n + 1, 0.5)]


# -- 1: discrete maximum principle over the whole matrix ------------------------


def test_c01_max_principle_matrix(bench_runs, ladder_run, refinement_runs, capsys):
    # every stored run stays under the sharp per-step amplification bound,
    # the matrix holds at least twelve configurations, and simulating the
    # whole matrix takes under two minutes of wall clock
    dirs = [info["dir"] for info in bench_runs.values()]
    dirs += ladder_run["points"]
    dirs += [r["dir"] for r in refinement_runs]
    worst = 0.0
    for d in dirs:
        record, _, _ = load_run(d)
        bound = np.maximum(
            record.steps["max_principle_bound"], record.steps["bound_discrete"]
        )
        worst = max(worst, float(np.max(record.steps["max_rho"] / bound)))
    wall = (
        sum(info["wall"] for info in bench_runs.values())
        + ladder_run["wall"]
        + sum(r["wall"] for r in refinement_runs)
    )
    ok = len(dirs) >= 12 and worst <= 1.0 + 1e-10 and wall <= 120.0
    _report(
        capsys,
        1,
        ok,
        f"{len(dirs)} configs, sup rho/bound = {worst:.12f} <= 1 + 1e-10, "
        f"wall {wall:.1f}s <= 120s",
    )


# -- 2: mass ledger on the inflow benchmark --------------------------------------


def test_c02_mass_ledger_inflow(bench_runs, capsys):
    record, summary, _ = load_run(bench_runs["inflow"]["dir"])
    nsteps = int(summary["steps"])
    step_worst = float(np.max(np.abs(record.steps["mass_step_residual"])))
    cum = abs(float(record.steps["mass_cum_residual"][-1]))
    ok = nsteps >= 1000 and step_worst <= 1e-10 and cum <= 1e-8
    _report(
        capsys,
        2,
        ok,
        f"{nsteps} steps, per-step residual {step_worst:.3e} <= 1e-10, "
        f"cumulative {cum:.3e} <= 1e-8",
    )


# -- 3: renormalized entropy audits ----------------------------------------------


def test_c03_renormalized_entropy(capsys):
    # linear entropy: the audit must reproduce the mass ledger identically
    m, solver, rho, fv = _inflow_solver()
    b, bp = entropy_pair("identity")
    ident_worst = 0.0
    bregman_worst = 0.0
    for _ in range(50):
        rep = solver.step(rho, fv, 1e-3)
        audit = audit_renormalized(solver, rho, rep.rho_new, fv, 1e-3, b, bp)
        ledger = (
            (rep.rho_new.sum() - rho.sum()) * m.cell_volume
            + rep.mass_out
            - rep.mass_in
        )
        ident_worst = max(ident_worst, abs(audit.raw - ledger))
        bregman_worst = max(bregman_worst, abs(audit.bregman))
        rho = rep.rho_new

    # quadratic entropy with u = 0: the balance against the discrete
    # Dirichlet form closes at solver precision
    m2 = build_mesh(1, 64, ZERO_1D)
    heat = ContinuitySolver(m2, rhob=0.5, eps=0.02)
    r2 = 0.5 + 0.3 * np.cos(np.pi * m2.centers[:, 0])
    b2, bp2 = entropy_pair("square")
    fv2 = [np.zeros(65)]
    rep2 = heat.step(r2, fv2, 1e-3)
    a2 = audit_renormalized(heat, r2, rep2.rho_new, fv2, 1e-3, b2, bp2)
    d_entropy = (b2(rep2.rho_new).sum() - b2(r2).sum()) * m2.cell_volume
    scale = abs(d_entropy) + 1e-3 * a2.diffusive_entropy + a2.bregman
    heat_rel = abs(a2.raw - (d_entropy + 1e-3 * a2.diffusive_entropy)) / scale
    strict_rel = abs(a2.strict) / scale

    # convex entropy: the cumulative raw residual is first order in dt
    def cumulative(dt, horizon=0.05):
        _, ss, rr, ff = _inflow_solver()
        bb, bbp = entropy_pair("xlogx")
        total, t = 0.0, 0.0
        while t < horizon - 1e-12:
            rep = ss.step(rr, ff, dt)
            total += audit_renormalized(ss, rr, rep.rho_new, ff, dt, bb, bbp).raw
            rr, t = rep.rho_new, t + dt
        return total

    ratio = cumulative(2e-3) / cumulative(1e-3)
    ok = (
        ident_worst <= 1e-13
        and bregman_worst == 0.0
        and max(heat_rel, strict_rel) <= 1e-8
        and 1.4 <= ratio <= 2.6
    )
    _report(
        capsys,
        3,
        ok,
        f"identity-vs-ledger gap {ident_worst:.2e}, heat identity rel "
        f"{max(heat_rel, strict_rel):.2e} <= 1e-8, xlogx dt ratio {ratio:.3f} "
        f"in [1.4, 2.6]",
    )


# -- 4: Fenchel-Young floor and tightness at subgradient pairs -------------------


def test_c04_fenchel_young_gap(capsys):
    rng = np.random.default_rng(20240815)
    pot = MollifiedPotential(
        PotentialSpec(mu0=1.0, mu1=0.1, eta0=0.5, eta1=0.2, q=2.0), delta=0.0
    )
    floor = np.inf
    for _ in range(10_000):
        dim = int(rng.integers(1, 4))
        d = _rand_sym(rng, dim, 2.0)
        s = subgradient(pot, _rand_sym(rng, dim, 2.0))
        floor = min(floor, fenchel_gap(pot, d, s).gap)

    # constructed equality pairs must close the gap for every exponent and
    # for both the kinked and the mollified profile
    eq_worst = 0.0
    for q in (1.5, 2.0, 3.0):
        for delta in (0.0, 1e-2):
            p = MollifiedPotential(
                PotentialSpec(mu0=1.0, mu1=0.0, eta0=0.5, eta1=0.0, q=q),
                delta=delta,
            )
            for _ in range(200):
                dim = int(rng.integers(1, 4))
                d = _rand_sym(rng, dim, 1.5)
                pair = fenchel_gap(p, d, subgradient(p, d))
                eq_worst = max(
                    eq_worst,
                    pair.gap / (1.0 + abs(pair.primal) + abs(pair.dual)),
                )
    ok = floor >= -1e-8 and eq_worst <= 1e-5
    _report(
        capsys,
        4,
        ok,
        f"floor over 10^4 random pairs {floor:.3e} >= -1e-8, "
        f"subgradient-pair gap {eq_worst:.3e} <= 1e-5 (scaled)",
    )


# -- 5: Legendre table against the power-law closed form -------------------------


def test_c05_conjugate_power_laws(capsys):
    svals = np.geomspace(1e-2, 1e2, 61)
    worst = 0.0
    for q in (1.5, 2.0, 3.0):
        qd = q / (q - 1.0)
        p = MollifiedPotential(
            PotentialSpec(mu0=2.0, mu1=0.0, eta0=1.0, eta1=0.0, q=q), delta=0.0
        )
        # deviatoric branch: phi(t) = (2/q) t^q
        ref = (2.0 ** (1.0 - qd) / qd) * svals**qd
        got = np.array([p.phistar(s) for s in svals])
        worst = max(worst, float(np.max(np.abs(got - ref) / ref)))
        # trace branch: psi(t) = |t|^q = (a/q) |t|^q with a = q
        a = q
        ref_t = (a ** (1.0 - qd) / qd) * svals**qd
        got_t = np.array([p.psistar(s) for s in svals])
        worst = max(worst, float(np.max(np.abs(got_t - ref_t) / ref_t)))
    ok = worst <= 1e-4
    _report(
        capsys,
        5,
        ok,
        f"conjugate rel err {worst:.3e} <= 1e-4 on s in [1e-2, 1e2], "
        f"q in {{3/2, 2, 3}}",
    )


# -- 6: per-step energy inequality and dt scaling of the residual ----------------


def test_c06_energy_residual(bench_runs, refinement_runs, capsys):
    worst_ratio = -np.inf
    worst_name = ""
    for name, info in bench_runs.items():
        record, _, _ = load_run(info["dir"])
        tol = 1e-5 * (1.0 + record.e0)
        ratio = float(np.max(record.energy["residual_dual"])) / tol
        if ratio > worst_ratio:
            worst_ratio, worst_name = ratio, name
    dts, resid = [], []
    for r in refinement_runs:
        record, _, _ = load_run(r["dir"])
        dts.append(r["dt"])
        resid.append(float(np.mean(np.abs(record.energy["residual"]))))
    slope = float(np.polyfit(np.log(dts), np.log(resid), 1)[0])
    ok = worst_ratio <= 1.0 and 0.8 <= slope <= 1.3
    _report(
        capsys,
        6,
        ok,
        f"max residual_dual / (1e-5 (1+E0)) = {worst_ratio:.3f} ({worst_name}), "
        f"refinement slope {slope:.3f} in [0.8, 1.3]",
    )


# -- 7: frozen-density single mode against the exact decay rate ------------------


def test_c07_linear_mode_decay(bench_runs, capsys):
    info = bench_runs["linear_mode"]
    record, _, _ = load_run(info["dir"])
    t = float(record.ts[-1])
    v0 = float(np.ravel(record.vcoef[0])[0])
    vt = float(np.ravel(record.vcoef[-1])[0])
    diff = abs(vt - v0 * math.exp(-math.pi**2 * t))
    ok = abs(t - 1.0) <= 1e-9 and diff <= 1e-4 and info["wall"] <= 5.0
    _report(
        capsys,
        7,
        ok,
        f"|v(1) - v0 exp(-pi^2)| = {diff:.3e} <= 1e-4, "
        f"wall {info['wall']:.2f}s <= 5s",
    )


# -- 8: stiffness ladder overshoot rate -------------------------------------------


def test_c08_stiffness_ladder_overshoot(ladder_run, capsys):
    sups = []
    for p in ladder_run["points"]:
        record, _, _ = load_run(p)
        sups.append(float(np.max(record.congestion["overshoot_l2"])))
    ratios = [sups[i + 1] / sups[i] for i in range(len(sups) - 1)]
    decreasing = all(sups[i + 1] < sups[i] for i in range(len(sups) - 1))
    # alpha rises fourfold per rung, so the overshoot should shrink by about
    # 4^(-1/2) = 0.5 per rung; accept a factor-of-two band around that rate
    rate_ok = all(0.25 <= r <= 1.0 for r in ratios)
    sups_txt = " -> ".join(f"{s:.3e}" for s in sups)
    ratios_txt = ", ".join(f"{r:.3f}" for r in ratios)
    ok = decreasing and rate_ok and ladder_run["wall"] <= 600.0
    _report(
        capsys,
        8,
        ok,
        f"sup overshoot {sups_txt} (ratios {ratios_txt} in [0.25, 1.00]), "
        f"wall {ladder_run['wall']:.1f}s <= 600s",
    )


# -- 9: complementarity mass along the ladder -------------------------------------


def test_c09_complementarity_ladder(ladder_run, capsys):
    vals = []
    for p in ladder_run["points"]:
        record, _, _ = load_run(p)
        vals.append(float(record.congestion["complementarity"][-1]))
    nonincreasing = all(
        vals[i + 1] <= vals[i] * (1.0 + 1e-12) for i in range(len(vals) - 1)
    )
    frac = vals[-1] / vals[0]
    vals_txt = " -> ".join(f"{v:.3e}" for v in vals)
    ok = nonincreasing and frac <= 0.10
    _report(
        capsys,
        9,
        ok,
        f"terminal complementarity {vals_txt}, final/initial {frac:.4f} <= 0.10",
    )


# -- 10: congested divergence along the ladder, lemma verdicts --------------------


def test_c10_congested_divergence_and_lemma(ladder_run, capsys):
    norms = []
    for p in ladder_run["points"]:
        record, _, _ = load_run(p)
        cd = record.congestion["congested_div_l2"]
        dt = record.steps["dt"]
        norms.append(float(np.sqrt(np.sum(dt * cd**2))))
    nonincreasing = all(
        norms[i + 1] <= norms[i] * (1.0 + 1e-12) for i in range(len(norms) - 1)
    )

    m = build_mesh(1, 64, ZERO_1D)
    # positive: nothing congested, any divergence is admissible
    pos = lemma_equivalence_check(m, np.full(64, 0.5), np.full(64, 2.0), 1.0)
    # congested: saturated plateau with divergence-free congested cells
    rho_c = np.full(64, 0.5)
    rho_c[20:40] = 1.0
    div_c = np.full(64, 1.5)
    div_c[20:40] = 0.0
    con = lemma_equivalence_check(m, rho_c, div_c, 1.0)
    # violated: overshoot with clean divergence breaks one direction
    rho_v = np.full(64, 0.5)
    rho_v[30:34] = 1.05
    vio = lemma_equivalence_check(m, rho_v, np.zeros(64), 1.0)
    lemma_ok = pos.consistent and con.consistent and not vio.consistent

    norms_txt = " -> ".join(f"{v:.4f}" for v in norms)
    ok = nonincreasing and lemma_ok
    _report(
        capsys,
        10,
        ok,
        f"congested div L2 {norms_txt} nonincreasing, lemma verdicts "
        f"(pos, congested, violated) = ({pos.consistent}, {con.consistent}, "
        f"{vio.consistent})",
    )


# -- 11: blockwise defect oracle and positivity -----------------------------------


def test_c11_defect_oracle(verify_reports, capsys):
    # one, four, and sixteen whole periods per block: block variance 1/2,
    # kinetic defect 1/4, exactly on resolved grids
    m = build_mesh(1, 4096, ZERO_1D)
    x = m.centers[:, 0]
    worst = 0.0
    for k in (16, 64, 256):
        u = np.sin(2.0 * np.pi * k * x)[:, None]
        est = estimate_defect(m, np.ones(4096), u, nblocks=16)
        worst = max(
            worst,
            float(np.max(np.abs(est.reynolds_trace - 0.5))),
            float(np.max(np.abs(est.kinetic_defect - 0.25))),
        )

    rng = np.random.default_rng(20240816)
    m2 = build_mesh(1, 256, ZERO_1D)
    floor = np.inf
    for _ in range(20):
        est = estimate_defect(
            m2,
            rng.uniform(0.0, 1.0, 256),
            rng.standard_normal((256, 1)),
            nblocks=8,
        )
        floor = min(floor, float(np.min(est.reynolds_trace)))
    stored_ok = all(
        rep["hard"]["defect_nonnegative_ok"] for rep in verify_reports.values()
    )
    ok = worst <= 1e-3 and floor >= -1e-8 and stored_ok
    _report(
        capsys,
        11,
        ok,
        f"(1/2, 1/4) oracle err {worst:.2e} <= 1e-3, random-data floor "
        f"{floor:.2e} >= -1e-8, stored runs nonnegative: {stored_ok}",
    )


# -- 12: classical compatibility and the corrupted-stress control -----------------


def test_c12_classical_compatibility(bench_runs, verify_reports, capsys):
    rep = verify_reports["smooth"]["compatibility"]
    clean_ok = (
        rep["compatible"]
        and rep["defect_max"] <= 1e-5
        and rep["gap_rel_max"] <= 1e-5
        and rep["congested_pairing"] <= 1e-6
    )
    # doubling the stored stress must break the duality clause
    record, _, _ = load_run(bench_runs["smooth"]["dir"])
    corrupted = compatibility_check(record, stress_scale=2.0)
    ok = clean_ok and not corrupted.energy_ok
    _report(
        capsys,
        12,
        ok,
        f"smooth run defect {rep['defect_max']:.2e}, gap {rep['gap_rel_max']:.2e}, "
        f"pairing {rep['congested_pairing']:.2e}; doubled stress energy_ok="
        f"{corrupted.energy_ok}",
    )


# -- 13: bit-identical artifacts on repetition ------------------------------------


def test_c13_deterministic_artifacts(tmp_path, capsys):
    # same basename under different parents: the verify report names the
    # run directory, so only the parents may differ
    d1, d2 = str(tmp_path / "a" / "uniform"), str(tmp_path / "b" / "uniform")
    RunDriver(_bench_cfg("uniform"), d1).execute()
    RunDriver(_bench_cfg("uniform"), d2).execute()
    runs_same = all(_bytes(d1, a) == _bytes(d2, a) for a in ARTIFACTS)
    verify_run(d1)
    verify_run(d2)
    verify_same = _bytes(d1, "verify_report.json") == _bytes(d2, "verify_report.json")
    # verifying again must neither change its own report nor the run artifacts
    before = [_bytes(d1, a) for a in ARTIFACTS] + [_bytes(d1, "verify_report.json")]
    verify_run(d1)
    after = [_bytes(d1, a) for a in ARTIFACTS] + [_bytes(d1, "verify_report.json")]
    stable = before == after
    ok = runs_same and verify_same and stable
    _report(
        capsys,
        13,
        ok,
        f"run artifacts identical: {runs_same}, verify reports identical: "
        f"{verify_same}, re-verify stable: {stable}",
    )
