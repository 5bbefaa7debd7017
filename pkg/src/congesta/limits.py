"""Defect estimation, solution-class verdicts, and parameter sweeps.

The verdict operations work from stored run fields only: density and
velocity-coefficient snapshots plus the per-step scalar series.  They are
re-runnable from artifacts on disk, so a verification pass never needs to
re-simulate.  All verdicts here are soft: they report pass flags and
margins for the sweep report and never raise, except for the positivity
floor of the defect estimator, which is a hard structural claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensors import field_contract, field_deviator, field_norm, field_trace
from .potential import stress_field

TEST_BANK_VERSION = 1


class NegativeDefect(Exception):
    """Coarse-grained Reynolds trace fell below the positivity floor."""


# ---------------------------------------------------------------------------
# run record: everything a verdict needs, reloadable from artifacts


@dataclass
class RunRecord:
    """Field snapshots and scalar series of one completed run."""

    mesh: object
    bd: object
    basis: object
    potential: object
    pressure: object
    mom: object
    ts: np.ndarray
    rho: np.ndarray
    vcoef: np.ndarray
    stress_cells: np.ndarray
    steps: dict
    energy: dict
    congestion: dict
    e0: float
    dt: float
    eps: float
    tau_c: float
    d_lower: float
    d_upper: float
    config_hash: str
    code_version: str
    _center_tables: tuple = field(default=None, repr=False)

    def center_tables(self):
        """Mode values/gradients at cell centers, built once."""
        if self._center_tables is None:
            pts = self.mesh.centers
            val = self.basis.mode_values(pts)
            grad = self.basis.mode_grads(pts)
            ubv = self.bd.extension.value(pts)
            ubg = self.bd.extension.grad(pts)
            self._center_tables = (val, grad, ubv, ubg)
        return self._center_tables

    def velocity_cells(self, k: int) -> np.ndarray:
        val, _, ubv, _ = self.center_tables()
        return ubv + np.einsum("pid,i->pd", val, self.vcoef[k])

    def strain_cells(self, k: int) -> np.ndarray:
        _, grad, _, ubg = self.center_tables()
        dim = self.mesh.dim
        g = ubg + np.einsum("piab,i->pab", grad, self.vcoef[k])
        ncomp = dim * (dim + 1) // 2
        sym = np.empty(g.shape[:-2] + (ncomp,))
        sym[..., 0] = g[..., 0, 0]
        if dim == 2:
            sym[..., 1] = g[..., 1, 1]
            sym[..., 2] = 0.5 * (g[..., 0, 1] + g[..., 1, 0])
        return sym

    def divergence_cells(self, k: int) -> np.ndarray:
        _, grad, _, ubg = self.center_tables()
        g = ubg + np.einsum("piab,i->pab", grad, self.vcoef[k])
        return np.einsum("paa->p", g)


# ---------------------------------------------------------------------------
# coarse-grained defect estimator


@dataclass
class DefectEstimate:
    """Blockwise Reynolds-trace and kinetic-defect estimates."""

    reynolds_trace: np.ndarray
    kinetic_defect: np.ndarray
    ratio_bounds_ok: bool
    d_lower: float
    d_upper: float
    nblocks: int

    @property
    def max_trace(self) -> float:
        return float(np.max(self.reynolds_trace)) if self.reynolds_trace.size else 0.0


def _block_means(values, shape, nblocks):
    """Mean over contiguous blocks; values (..., ncells) -> (..., nblocks^d)."""
    if len(shape) == 1:
        (n,) = shape
        if n % nblocks:
            raise ValueError(f"{n} cells do not tile into {nblocks} blocks")
        v = values.reshape(values.shape[:-1] + (nblocks, n // nblocks))
        return v.mean(axis=-1)
    nx, ny = shape
    if nx % nblocks or ny % nblocks:
        raise ValueError(f"{shape} cells do not tile into {nblocks}^2 blocks")
    v = values.reshape(
        values.shape[:-1] + (nblocks, nx // nblocks, nblocks, ny // nblocks)
    )
    return v.mean(axis=(-3, -1)).reshape(values.shape[:-1] + (nblocks * nblocks,))


def estimate_defect(
    mesh,
    rho,
    u_cells,
    nblocks: int,
    d_lower: float = None,
    d_upper: float = 2.0,
) -> DefectEstimate:
    """Blockwise tr[R] = <rho|u|^2> - |<rho u>|^2/<rho> and its half.

    Coarse-graining over blocks of at least 4 cells per axis; tiny negative
    traces above the -1e-8 floor are clamped to zero (they are quadrature
    noise around vacuum blocks), anything below the floor is a structural
    positivity violation and raises.
    """
    dim = mesh.dim
    if d_lower is None:
        d_lower = 2.0 / dim
    per_axis = min(s // nblocks for s in mesh.shape)
    if per_axis < 4:
        raise ValueError(
            f"blocks need >= 4 cells per axis, got {per_axis} "
            f"({mesh.shape} cells over {nblocks} blocks)"
        )
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u_cells, dtype=float)
    m0 = _block_means(rho, mesh.shape, nblocks)
    m1 = np.stack(
        [_block_means(rho * u[:, a], mesh.shape, nblocks) for a in range(dim)],
        axis=-1,
    )
    k2 = _block_means(rho * np.sum(u * u, axis=-1), mesh.shape, nblocks)
    safe = m0 > 1e-12
    trace = np.where(safe, k2 - np.sum(m1 * m1, axis=-1) / np.where(safe, m0, 1.0), 0.0)
    low = float(np.min(trace)) if trace.size else 0.0
    if low < -1e-8:
        raise NegativeDefect(
            f"block Reynolds trace {low:.3e} below the -1e-8 positivity floor"
        )
    trace = np.maximum(trace, 0.0)
    kinetic = 0.5 * trace
    active = kinetic > 1e-14
    ratio_ok = bool(
        np.all(trace[active] >= d_lower * kinetic[active] - 1e-12)
        and np.all(trace[active] <= d_upper * kinetic[active] + 1e-12)
    )
    return DefectEstimate(
        reynolds_trace=trace,
        kinetic_defect=kinetic,
        ratio_bounds_ok=ratio_ok,
        d_lower=d_lower,
        d_upper=d_upper,
        nblocks=nblocks,
    )


# ---------------------------------------------------------------------------
# versioned test bank for the weak-form verdicts


@dataclass
class BankFunction:
    """Scalar space-time test function with analytic derivatives."""

    name: str
    f: object
    ft: object
    grad: object


def _space_atoms():
    return [
        ("1", lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
        ("x", lambda x: x, lambda x: np.ones_like(x)),
        ("x2", lambda x: x * x, lambda x: 2.0 * x),
        ("cospix", lambda x: np.cos(np.pi * x), lambda x: -np.pi * np.sin(np.pi * x)),
        (
            "cos2pix",
            lambda x: np.cos(2 * np.pi * x),
            lambda x: -2 * np.pi * np.sin(2 * np.pi * x),
        ),
        ("sinpix", lambda x: np.sin(np.pi * x), lambda x: np.pi * np.cos(np.pi * x)),
        (
            "sin2pix",
            lambda x: np.sin(2 * np.pi * x),
            lambda x: 2 * np.pi * np.cos(2 * np.pi * x),
        ),
    ]


def _time_atoms(horizon):
    return [
        ("1", lambda t: 1.0, lambda t: 0.0),
        ("t", lambda t: t / horizon, lambda t: 1.0 / horizon),
        (
            "sinpit",
            lambda t: np.sin(np.pi * t / horizon),
            lambda t: (np.pi / horizon) * np.cos(np.pi * t / horizon),
        ),
    ]


def build_test_bank(dim: int, horizon: float) -> list:
    """Deterministic tensor-product bank, version TEST_BANK_VERSION."""
    bank = []
    tatoms = _time_atoms(horizon)
    if dim == 1:
        for sname, s, sx in _space_atoms():
            for tname, g, gt in tatoms:
                def f(t, x, s=s, g=g):
                    return g(t) * s(x[:, 0])

                def ft(t, x, s=s, gt=gt):
                    return gt(t) * s(x[:, 0])

                def grad(t, x, sx=sx, g=g):
                    return (g(t) * sx(x[:, 0]))[:, None]

                bank.append(BankFunction(f"{sname}*{tname}", f, ft, grad))
        return bank
    atoms = _space_atoms()[:4]
    for sxn, sx, sxd in atoms:
        for syn, sy, syd in atoms:
            for tname, g, gt in tatoms:
                def f(t, x, sx=sx, sy=sy, g=g):
                    return g(t) * sx(x[:, 0]) * sy(x[:, 1])

                def ft(t, x, sx=sx, sy=sy, gt=gt):
                    return gt(t) * sx(x[:, 0]) * sy(x[:, 1])

                def grad(t, x, sx=sx, sy=sy, sxd=sxd, syd=syd, g=g):
                    out = np.empty((x.shape[0], 2))
                    out[:, 0] = g(t) * sxd(x[:, 0]) * sy(x[:, 1])
                    out[:, 1] = g(t) * sx(x[:, 0]) * syd(x[:, 1])
                    return out

                bank.append(BankFunction(f"{sxn}*{syn}*{tname}", f, ft, grad))
    return bank


# ---------------------------------------------------------------------------
# dissipative-solution verdict


@dataclass
class VerdictThresholds:
    """Soft tolerances for the solution-class clauses."""

    continuity: float = 5e-2
    momentum: float = 5e-2
    energy: float = 1e-3
    complementarity: float = 1e-2
    congested_divergence: float = 1e-2
    overshoot: float = None  # defaults to tau_c of the run


@dataclass
class DissipativeVerdict:
    """Per-clause residuals and pass flags of the solution-class check."""

    continuity_residual: float
    momentum_residual: float
    energy_margin: float
    complementarity: float
    congested_divergence: float
    bounds_ok: bool
    continuity_pass: bool
    momentum_pass: bool
    energy_pass: bool
    complementarity_pass: bool
    congested_divergence_pass: bool
    bank_version: int
    bank_size: int

    @property
    def passed(self) -> bool:
        return bool(
            self.continuity_pass
            and self.momentum_pass
            and self.energy_pass
            and self.complementarity_pass
            and self.congested_divergence_pass
            and self.bounds_ok
        )

    def as_dict(self) -> dict:
        return {
            "continuity_residual": self.continuity_residual,
            "momentum_residual": self.momentum_residual,
            "energy_margin": self.energy_margin,
            "complementarity": self.complementarity,
            "congested_divergence": self.congested_divergence,
            "bounds_ok": self.bounds_ok,
            "continuity_pass": self.continuity_pass,
            "momentum_pass": self.momentum_pass,
            "energy_pass": self.energy_pass,
            "complementarity_pass": self.complementarity_pass,
            "congested_divergence_pass": self.congested_divergence_pass,
            "passed": self.passed,
            "bank_version": self.bank_version,
            "bank_size": self.bank_size,
        }


def _interior_mask(mesh):
    """Cell mask excluding one boundary cell layer."""
    if mesh.dim == 1:
        (n,) = mesh.shape
        m = np.zeros(n, dtype=bool)
        m[1:-1] = True
        return m
    nx, ny = mesh.shape
    m = np.zeros((nx, ny), dtype=bool)
    m[1:-1, 1:-1] = True
    return m.reshape(-1)


def _continuity_weak_residual(record: RunRecord, bank) -> float:
    """Max weak residual of d_t rho + div(rho u) = 0 over the scalar bank.

    Trapezoid in time over the stored snapshots; the boundary flux uses the
    same upwind trace as the scheme (rho_B on inflow, cell value on
    outflow).  The ladder eps-diffusion is part of the distance measured.
    """
    mesh = record.mesh
    vol = mesh.cell_volume
    pts = mesh.centers
    ts = record.ts
    ns = len(ts)
    rhob = record.bd.rhob
    area = mesh.bface_area
    bcells = mesh.bface_cell
    worst = 0.0
    # outward boundary velocity is time-independent (uB fixed): from uB ext
    ubn = record.mesh.bface_un
    for fn in bank:
        interior = np.zeros(ns)
        bflux = np.zeros(ns)
        for k in range(ns):
            rho = record.rho[k]
            u = record.velocity_cells(k)
            t = float(ts[k])
            interior[k] = vol * float(
                np.sum(rho * fn.ft(t, pts))
                + np.sum((rho[:, None] * u) * fn.grad(t, pts))
            )
            trace = np.where(ubn > 0.0, rho[bcells], rhob)
            bflux[k] = float(
                np.sum(area * ubn * trace * fn.f(t, mesh.bface_center))
            )
        mass_term = vol * (
            float(np.sum(record.rho[-1] * fn.f(float(ts[-1]), pts)))
            - float(np.sum(record.rho[0] * fn.f(float(ts[0]), pts)))
        )
        resid = mass_term - np.trapezoid(interior - bflux, ts)
        worst = max(worst, abs(float(resid)))
    return worst


def _momentum_weak_residual(record: RunRecord, defect_allow: float) -> float:
    """Max weak residual of the momentum balance over time-compact tests.

    Tests are the first Galerkin modes times sin(pi t/T); integrals exclude
    one boundary cell layer, and the isotropic defect proxy enters with the
    coarse-grained trace estimate as an allowance on the residual.
    """
    mesh = record.mesh
    basis = record.basis
    pot = record.potential
    cp = record.pressure
    dim = mesh.dim
    ts = record.ts
    ns = len(ts)
    horizon = float(ts[-1]) if ts[-1] > 0 else 1.0
    ntest = min(basis.n, 4)
    keep = _interior_mask(mesh)[basis.cellq]
    wq = np.where(keep, basis.wq, 0.0)
    sigma = np.sin(np.pi * ts / horizon)
    dsigma = (np.pi / horizon) * np.cos(np.pi * ts / horizon)
    ms = record.mom
    rows = np.zeros((ns, ntest))
    drows = np.zeros((ns, ntest))
    for k in range(ns):
        rho_q = record.rho[k][basis.cellq]
        v = record.vcoef[k]
        u_q = ms.uB_q + np.einsum("qid,i->qd", basis.val, v)
        du = ms.strain_state(v)
        dev = field_deviator(du, dim)
        s_q = stress_field(pot, field_norm(dev, dim), field_trace(du, dim), dev, dim)
        pi_q = cp.pressure(rho_q)
        mom_w = np.einsum("q,qa,qia->i", wq * rho_q, u_q, basis.val[:, :ntest, :])
        conv = np.einsum(
            "q,qa,qb,qiab->i", wq * rho_q, u_q, u_q, basis.grad[:, :ntest, :, :]
        )
        pres = np.einsum("q,qi->i", wq * pi_q, basis.div[:, :ntest])
        visc = np.einsum(
            "q,qc,qic->i", wq, s_q * basis.met, basis.sym[:, :ntest, :]
        )
        rows[k] = conv + pres - visc
        drows[k] = mom_w
    worst = 0.0
    for i in range(ntest):
        resid = -np.trapezoid(
            dsigma * drows[:, i] + sigma * rows[:, i], ts
        )
        worst = max(worst, abs(float(resid)))
    return max(worst - defect_allow, 0.0)


def dissipative_verdict(
    record: RunRecord,
    test_bank=None,
    thresholds: VerdictThresholds = None,
) -> DissipativeVerdict:
    """Clause-by-clause distance of a stored run to the solution class.

    Soft verdict: finite residuals and pass flags, never an exception.  The
    residuals measure distance to the vanishing-regularization model, so
    ladder runs with large eps or small alpha legitimately report failures;
    the sweep report tracks how the margins shrink along the ladder.
    """
    th = thresholds or VerdictThresholds()
    mesh = record.mesh
    bank = test_bank or build_test_bank(mesh.dim, float(record.ts[-1]) or 1.0)
    cont = _continuity_weak_residual(record, bank)

    # defect allowance from the final snapshot
    nb = max(2, min(s // 4 for s in mesh.shape))
    last = len(record.ts) - 1
    try:
        est = estimate_defect(
            mesh,
            record.rho[last],
            record.velocity_cells(last),
            nb,
            record.d_lower,
            record.d_upper,
        )
        block_vol = mesh.cell_volume * mesh.ncells / est.reynolds_trace.size
        defect_allow = float(np.sum(est.reynolds_trace) * block_vol)
    except (NegativeDefect, ValueError):
        defect_allow = 0.0
    mom = _momentum_weak_residual(record, defect_allow / max(record.d_lower, 1e-12))

    e0 = record.e0
    resid_series = np.asarray(record.energy.get("residual_dual", [0.0]), dtype=float)
    energy_margin = float(np.max(np.cumsum(resid_series))) if resid_series.size else 0.0
    energy_margin = max(energy_margin, 0.0)

    comp_series = np.asarray(
        record.congestion.get("complementarity", [0.0]), dtype=float
    )
    comp = float(comp_series[-1]) if comp_series.size else 0.0
    div_series = np.asarray(
        record.congestion.get("congested_div_l2", [0.0]), dtype=float
    )
    cong_div = float(np.sqrt(np.sum(record.dt * div_series**2)))

    rho_max = float(np.max(record.rho))
    rho_min = float(np.min(record.rho))
    over_tol = th.overshoot if th.overshoot is not None else record.tau_c
    bounds_ok = bool(
        rho_max <= record.pressure.rho_star + over_tol and rho_min >= -1e-12
    )

    return DissipativeVerdict(
        continuity_residual=cont,
        momentum_residual=mom,
        energy_margin=energy_margin,
        complementarity=comp,
        congested_divergence=cong_div,
        bounds_ok=bounds_ok,
        continuity_pass=bool(cont <= th.continuity),
        momentum_pass=bool(mom <= th.momentum),
        energy_pass=bool(energy_margin <= th.energy * (1.0 + e0)),
        complementarity_pass=bool(comp <= th.complementarity),
        congested_divergence_pass=bool(cong_div <= th.congested_divergence),
        bank_version=TEST_BANK_VERSION,
        bank_size=len(bank),
    )


# ---------------------------------------------------------------------------
# lemma equivalence check


@dataclass
class LemmaVerdict:
    """Both directions of the exclusion-vs-saturation equivalence."""

    constraint_holds: bool
    divergence_free_on_congested: bool
    forward_consistent: bool
    backward_consistent: bool
    overshoot_linf: float
    congested_div_l2: float

    @property
    def consistent(self) -> bool:
        return self.forward_consistent and self.backward_consistent


def lemma_equivalence_check(
    mesh,
    rho,
    div_h,
    rho_star: float,
    tau_c: float = 0.01,
    div_tol: float = 1e-6,
) -> LemmaVerdict:
    """Check both directions of: density stays admissible iff the velocity
    field is divergence-free wherever the constraint saturates.

    Forward: admissible density must come with (near-)zero divergence on
    the congested set.  Backward: zero congested divergence must come with
    an admissible density.  Each direction is reported independently; a
    synthetic violated pairing shows up as one direction failing.
    """
    rho = np.asarray(rho, dtype=float)
    div_h = np.asarray(div_h, dtype=float)
    over = float(np.max(rho - rho_star)) if rho.size else 0.0
    mask = rho > rho_star - tau_c
    vol = mesh.cell_volume
    div_mass = float(np.sqrt(vol * np.sum(np.where(mask, div_h, 0.0) ** 2)))
    a_holds = over <= tau_c
    b_holds = div_mass <= div_tol
    return LemmaVerdict(
        constraint_holds=a_holds,
        divergence_free_on_congested=b_holds,
        forward_consistent=(not a_holds) or b_holds,
        backward_consistent=(not b_holds) or a_holds,
        overshoot_linf=max(over, 0.0),
        congested_div_l2=div_mass,
    )


# ---------------------------------------------------------------------------
# classical-compatibility check


@dataclass
class CompatibilityVerdict:
    """Whether a stored run sits in the classical-compatible regime."""

    defect_max: float
    gap_rel_max: float
    congested_pairing: float
    energy_ok: bool
    defect_ok: bool
    gap_ok: bool
    pairing_ok: bool

    @property
    def compatible(self) -> bool:
        return bool(self.defect_ok and self.gap_ok and self.pairing_ok and self.energy_ok)


def compatibility_check(
    record: RunRecord,
    stress_scale: float = 1.0,
    tol_defect: float = 1e-5,
    tol_gap: float = 1e-5,
    tol_pairing: float = 1e-6,
) -> CompatibilityVerdict:
    """Test the stored run against the classical-compatibility clauses.

    Uses the stored stress snapshots (times stress_scale, the negative
    control hook): the Fenchel-Young gap of stored stress against the
    strain reconstructed from the stored coefficients must vanish at the
    classical level, the coarse-grained defect must vanish, and the
    congested pressure-divergence pairing must vanish.
    """
    mesh = record.mesh
    pot = record.potential
    cp = record.pressure
    dim = mesh.dim
    ns = len(record.ts)
    nb = max(2, min(s // 4 for s in mesh.shape))
    vol = mesh.cell_volume
    defect_max = 0.0
    gap_rel_max = 0.0
    pairing_max = 0.0
    for k in range(ns):
        u = record.velocity_cells(k)
        try:
            est = estimate_defect(
                mesh, record.rho[k], u, nb, record.d_lower, record.d_upper
            )
            defect_max = max(defect_max, est.max_trace)
        except ValueError:
            pass
        du = record.strain_cells(k)
        s_cells = stress_scale * record.stress_cells[k]
        dev = field_deviator(du, dim)
        f_p = pot.phi(field_norm(dev, dim)) + pot.psi(field_trace(du, dim))
        dev_s = field_deviator(s_cells, dim)
        f_d = pot.phistar(field_norm(dev_s, dim)) + pot.psistar(
            field_trace(s_cells, dim) / dim
        )
        pair = field_contract(s_cells, du, dim)
        gap = (f_p + f_d - pair) / (1.0 + np.abs(f_p) + np.abs(f_d))
        gap_rel_max = max(gap_rel_max, float(np.max(gap)))
        rho = record.rho[k]
        congested = rho > cp.rho_star - record.tau_c
        pi = cp.pressure(rho)
        divu = record.divergence_cells(k)
        pairing_max = max(
            pairing_max,
            abs(float(vol * np.sum(np.where(congested, pi * divu, 0.0)))),
        )
    energy_ok = bool(gap_rel_max <= tol_gap)
    return CompatibilityVerdict(
        defect_max=defect_max,
        gap_rel_max=gap_rel_max,
        congested_pairing=pairing_max,
        energy_ok=energy_ok,
        defect_ok=bool(defect_max <= tol_defect),
        gap_ok=bool(gap_rel_max <= tol_gap),
        pairing_ok=bool(pairing_max <= tol_pairing),
    )


# ---------------------------------------------------------------------------
# parameter sweeps


@dataclass
class SweepPoint:
    """One run of a ladder with its parameters and summary scalars."""

    delta: float
    eps: float
    alpha: float
    n: int
    resolution: object
    dt: float
    summary: dict = None
    status: str = "pending"
    error: str = ""


@dataclass
class SweepReport:
    """All sweep points plus log-log rate fits along each swept axis."""

    points: list
    fits: dict
    failures: list
    bank_version: int = TEST_BANK_VERSION

    def as_dict(self) -> dict:
        return {
            "points": [
                {
                    "delta": p.delta,
                    "eps": p.eps,
                    "alpha": p.alpha,
                    "n": p.n,
                    "resolution": p.resolution,
                    "dt": p.dt,
                    "status": p.status,
                    "error": p.error,
                    "summary": p.summary,
                }
                for p in self.points
            ],
            "fits": self.fits,
            "failures": self.failures,
            "bank_version": self.bank_version,
        }


_FIT_METRICS = {
    "alpha": "overshoot_l2",
    "delta": "energy_margin",
    "eps": "terminal_drift",
    "n": "kinetic_terminal",
}


def _fit_rates(points) -> dict:
    """Log-log slope of the mapped metric along each swept axis."""
    fits = {}
    done = [p for p in points if p.status == "done" and p.summary]
    for axis, metric in _FIT_METRICS.items():
        vals = sorted({getattr(p, axis) for p in done})
        if len(vals) < 2:
            continue
        xs, ys = [], []
        for v in vals:
            matches = [p for p in done if getattr(p, axis) == v]
            series = [
                p.summary[metric]
                for p in matches
                if p.summary.get(metric) is not None
            ]
            if series:
                xs.append(float(v))
                ys.append(float(np.mean(series)))
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        usable = ys > 0.0
        entry = {
            "axis": axis,
            "metric": metric,
            "values": [float(v) for v in xs],
            "metrics": [float(y) for y in ys],
        }
        if usable.sum() >= 2:
            slope = float(
                np.polyfit(np.log(xs[usable]), np.log(ys[usable]), 1)[0]
            )
            entry["rate"] = slope
        fits[axis] = entry
    return fits


def run_sweep(points, run_one, workers: int = 1) -> SweepReport:
    """Execute every sweep point and fit rates along swept axes.

    run_one(point) -> summary dict; failures are recorded per point and the
    sweep continues.  With workers > 1 the points run in a process pool and
    the results are reduced in point order, so the report is deterministic
    either way.
    """
    points = list(points)
    failures = []

    def attempt(p):
        try:
            return ("done", run_one(p), "")
        except Exception as exc:  # noqa: BLE001 - per-point fault isolation
            return ("failed", None, f"{type(exc).__name__}: {exc}")

    if workers > 1:
        import multiprocessing as mp

        with mp.Pool(processes=workers) as pool:
            results = pool.map(_SweepWorker(run_one), points)
    else:
        results = [attempt(p) for p in points]
    for i, (status, summary, err) in enumerate(results):
        points[i].status = status
        points[i].summary = summary
        points[i].error = err
        if status != "done":
            failures.append({"index": i, "error": err})
    return SweepReport(points=points, fits=_fit_rates(points), failures=failures)


class _SweepWorker:
    """Picklable per-point executor for the process pool."""

    def __init__(self, run_one):
        self.run_one = run_one

    def __call__(self, point):
        try:
            return ("done", self.run_one(point), "")
        except Exception as exc:  # noqa: BLE001 - per-point fault isolation
            return ("failed", None, f"{type(exc).__name__}: {exc}")
