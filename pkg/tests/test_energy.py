"""Per-step energy ledger: exact closures, sign structure, verdicts."""

import numpy as np
import pytest

from congesta.congestion import CongestionPressure
from congesta.continuity import ContinuitySolver
from congesta.domain import build_mesh, extend_uB
from congesta.energy import (
    EnergyAuditor,
    EnergyLedger,
    assemble_ledger,
    assert_energy_inequality,
)
from congesta.momentum import GalerkinBasis, MomentumSolver, fixed_point_coupler
from congesta.potential import MollifiedPotential, PotentialSpec


def make_solver(n=32, rhob=0.9, eta0=0.1, eps=1e-3, alpha=40.0, modes=4):
    m = build_mesh(1, n, {"left": [0.0], "right": [0.0]})
    bd = extend_uB(m, {"left": [0.0], "right": [0.0]}, rhob=rhob)
    basis = GalerkinBasis(m, modes)
    pot = MollifiedPotential(PotentialSpec(mu0=1.0, eta0=eta0, q=2.0))
    ms = MomentumSolver(m, basis, pot, CongestionPressure(alpha=alpha), bd, eps=eps)
    return m, bd, ms


def coupled_step(dt, n=32):
    m, bd, ms = make_solver(n=n)
    cs = ContinuitySolver(m, rhob=0.9, eps=1e-3)
    x = m.centers[:, 0]
    rho = 0.7 + 0.25 * np.exp(-((x - 0.5) ** 2) / 0.12**2)
    v = ms.initial_coefficients(np.sin(2 * np.pi * x)[:, None])
    rep, v_new, data, _, fv = fixed_point_coupler(cs, ms, rho, v, dt)
    auditor = EnergyAuditor(ms)
    led = auditor.ledger(rho, rep.rho_new, v, v_new, dt, mom_data=data, face_vel=fv)
    return led


def test_zero_data_gives_zero_ledger():
    m, bd, ms = make_solver()
    rho = np.full(32, 0.5)
    v = np.zeros(4)
    led = EnergyAuditor(ms).ledger(rho, rho, v, v, 1e-3)
    assert led.kinetic == 0.0
    assert led.kinetic_prev == 0.0
    assert led.pressure_potential == led.pressure_potential_prev
    assert led.dissipation_pairing == 0.0
    assert led.numdiss_kinetic == 0.0
    assert led.numdiss_pressure == 0.0
    assert led.residual == 0.0
    assert led.residual_dual == 0.0
    verdict = assert_energy_inequality(led)
    assert verdict.ok and verdict.margin == 0.0


def test_coupled_step_verdict_and_signs():
    led = coupled_step(1e-3)
    verdict = assert_energy_inequality(led, e0=led.total_prev)
    assert verdict.ok
    assert verdict.signs_ok
    assert verdict.gap_floor_ok
    assert led.numdiss_kinetic >= 0.0
    assert led.numdiss_pressure >= 0.0
    assert led.numdiss_upwind >= 0.0
    assert led.boundary_in_bregman >= 0.0
    assert led.eps_entropy >= 0.0
    assert led.fenchel_gap_min >= -1e-8
    # the dual form can only exceed the pairing form (Fenchel-Young)
    assert led.residual_dual >= led.residual - 1e-14


def test_residual_scales_linearly_in_dt():
    r_coarse = abs(coupled_step(2e-3).residual)
    r_fine = abs(coupled_step(1e-3).residual)
    assert r_coarse / r_fine == pytest.approx(2.0, abs=0.5)


def test_frozen_density_closure():
    # single viscous mode, frozen density: every FV line is structurally
    # zero and the Galerkin balance closes at machine precision
    m, bd, ms = make_solver(eta0=0.5, modes=1)
    rho = np.ones(32)
    x = m.centers[:, 0]
    v = ms.initial_coefficients(np.sin(np.pi * x)[:, None])
    v_new, data = ms.step(rho, rho, v, v, 1e-3)
    led = EnergyAuditor(ms).ledger(rho, rho, v, v_new, 1e-3, mom_data=data)
    assert led.numdiss_pressure == 0.0
    assert led.numdiss_upwind == 0.0
    assert led.boundary_out == 0.0
    assert led.boundary_in_bregman == 0.0
    assert led.eps_entropy == 0.0
    scale = 1.0 + led.total_prev
    assert abs(led.residual) <= 1e-12 * scale
    assert assert_energy_inequality(led, e0=led.total_prev).ok
    # the kinetic energy actually decays
    assert led.kinetic < led.kinetic_prev


def test_frozen_velocity_diffusion_closure():
    # zero velocity, pure density diffusion: potential change balances the
    # entropy diffusion and pressure Bregman lines exactly
    m, bd, ms = make_solver(eps=0.02, alpha=2.0)
    cs = ContinuitySolver(m, rhob=0.9, eps=0.02)
    x = m.centers[:, 0]
    rho = 0.5 + 0.3 * np.cos(np.pi * x)
    fv = [np.zeros(33)]
    rep = cs.step(rho, fv, 1e-3)
    v = np.zeros(4)
    led = EnergyAuditor(ms).ledger(rho, rep.rho_new, v, v, 1e-3, face_vel=fv)
    assert led.kinetic == 0.0 and led.kinetic_prev == 0.0
    assert led.eps_entropy > 0.0
    assert led.numdiss_pressure > 0.0
    scale = 1.0 + led.total_prev
    assert abs(led.residual) <= 1e-10 * scale
    assert assert_energy_inequality(led, e0=led.total_prev).ok
    # diffusion destroys pressure potential
    assert led.pressure_potential < led.pressure_potential_prev


def test_assemble_ledger_matches_method():
    m, bd, ms = make_solver(modes=2)
    rho = np.full(32, 0.5)
    v = np.array([0.1, -0.05])
    auditor = EnergyAuditor(ms)
    a = auditor.ledger(rho, rho, v, v, 1e-3)
    b = assemble_ledger(auditor, rho, rho, v, v, 1e-3)
    assert a.columns() == b.columns()


def test_columns_are_stable_and_complete():
    led = coupled_step(1e-3)
    cols = led.columns()
    expected = {
        "kinetic",
        "kinetic_prev",
        "pressure_potential",
        "pressure_potential_prev",
        "dissipation_primal",
        "dissipation_dual",
        "dissipation_pairing",
        "boundary_out",
        "boundary_in_bregman",
        "eps_entropy",
        "numdiss_kinetic",
        "numdiss_pressure",
        "numdiss_upwind",
        "rhs_stress",
        "rhs_pressure",
        "rhs_kinetic",
        "rhs_inflow",
        "residual",
        "residual_dual",
        "fenchel_gap_min",
        "fenchel_gap_rel_max",
    }
    assert set(cols) == expected
    assert all(isinstance(val, float) for val in cols.values())
    assert set(led.rhs_terms) == {"stress", "pressure", "kinetic", "inflow_potential"}
    assert led.total == led.kinetic + led.pressure_potential
    assert led.total_prev == led.kinetic_prev + led.pressure_potential_prev


def _ledger_with(**overrides):
    base = {name: 0.0 for name in EnergyLedger.__dataclass_fields__}
    base["dt"] = 1e-3
    base.update(overrides)
    return EnergyLedger(**base)


def test_verdict_flags_each_failure_mode():
    ok = assert_energy_inequality(_ledger_with())
    assert ok.ok
    # positive dual residual beyond tolerance fails the inequality
    bad_margin = assert_energy_inequality(_ledger_with(residual_dual=1e-3))
    assert not bad_margin.ok and bad_margin.signs_ok
    # a negative dissipation line fails the sign audit
    bad_sign = assert_energy_inequality(_ledger_with(numdiss_kinetic=-1e-6))
    assert not bad_sign.ok and not bad_sign.signs_ok
    # a Fenchel gap below the floor fails independently
    bad_gap = assert_energy_inequality(_ledger_with(fenchel_gap_min=-1e-6))
    assert not bad_gap.ok and not bad_gap.gap_floor_ok
    assert bad_gap.signs_ok
    # the tolerance is relative to 1 + E(0)
    scaled = assert_energy_inequality(_ledger_with(residual_dual=1e-3), e0=1e3)
    assert scaled.ok
