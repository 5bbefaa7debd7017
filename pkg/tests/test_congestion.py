"""Stiff pressure law and constraint diagnostics."""

import numpy as np
import pytest

from congesta.congestion import (
    AlphaTooSmall,
    CongestionPressure,
    CongestionReport,
    congestion_diagnostics,
    pressure_eval,
    pressure_potential,
)
from congesta.domain import build_mesh

ZERO_1D = {"left": [0.0], "right": [0.0]}


def test_pressure_values():
    p = CongestionPressure(alpha=40.0)
    assert p.pressure(1.0) == pytest.approx(1.0)
    assert p.pressure(0.9) == pytest.approx(0.9**40, rel=1e-12)
    assert p.pressure(0.0) == 0.0
    # below the congestion level the law is vanishingly small
    assert p.pressure(0.5) < 1e-12


def test_rho_star_rescales_argument():
    p = CongestionPressure(alpha=10.0, rho_star=0.8)
    assert p.pressure(0.8) == pytest.approx(1.0)
    assert p.pressure(0.4) == pytest.approx(0.5**10, rel=1e-12)


def test_convexity_identity():
    # rho * Pi'(rho) - Pi(rho) = pi(rho) ties the ledger to the pressure term
    rng = np.random.default_rng(20240811)
    for alpha in (2.0, 10.0, 40.0, 160.0):
        p = CongestionPressure(alpha=alpha)
        rho = rng.uniform(0.05, 1.1, size=64)
        lhs = rho * p.dpotential(rho) - p.potential(rho)
        np.testing.assert_allclose(lhs, p.pressure(rho), rtol=1e-12, atol=1e-300)


def test_potential_closed_form_alpha_two():
    p = CongestionPressure(alpha=2.0)
    assert p.potential(0.4) == pytest.approx(0.16, rel=1e-12)
    assert p.dpotential(0.4) == pytest.approx(0.8, rel=1e-12)
    assert p.d2potential(0.4) == pytest.approx(2.0, rel=1e-12)


def test_derivatives_match_finite_differences():
    p = CongestionPressure(alpha=40.0)
    h = 1e-7
    for rho in (0.5, 0.9, 1.0, 1.05):
        fd = (p.potential(rho + h) - p.potential(rho - h)) / (2 * h)
        assert p.dpotential(rho) == pytest.approx(fd, rel=1e-6)


def test_bregman_nonnegative_and_zero_on_diagonal():
    p = CongestionPressure(alpha=2.0)
    assert p.bregman(0.4, 0.8) == pytest.approx(0.16, rel=1e-12)
    rng = np.random.default_rng(20240812)
    for alpha in (2.0, 40.0):
        pa = CongestionPressure(alpha=alpha)
        a = rng.uniform(0.0, 1.1, size=200)
        b = rng.uniform(0.1, 1.1, size=200)
        breg = pa.bregman(a, b)
        assert np.all(breg >= -1e-14)
        np.testing.assert_allclose(pa.bregman(b, b), 0.0, atol=1e-15)


def test_alpha_validation():
    with pytest.raises(AlphaTooSmall):
        CongestionPressure(alpha=1.0)
    with pytest.raises(AlphaTooSmall):
        CongestionPressure(alpha=0.5)
    with pytest.raises(ValueError):
        CongestionPressure(alpha=10.0, rho_star=0.0)


def test_module_level_wrappers():
    p = CongestionPressure(alpha=40.0)
    rho = np.array([0.5, 0.9, 1.0])
    np.testing.assert_allclose(pressure_eval(p, rho), p.pressure(rho))
    np.testing.assert_allclose(pressure_potential(p, rho), p.potential(rho))


def test_diagnostics_exact_synthetic_state():
    # half the cells congested at 1.02, the rest far below: every norm of
    # the overshoot and the masked divergence has a closed form
    m = build_mesh(1, 64, ZERO_1D)
    rho = np.full(64, 0.5)
    rho[:32] = 1.02
    div = np.zeros(64)
    div[:32] = 0.4
    div[32:] = 2.0  # uncongested divergence must not leak into the metric
    p = CongestionPressure(alpha=40.0)
    rep = congestion_diagnostics(m, rho, div, p, tau_c=0.01)
    assert rep.overshoot_linf == pytest.approx(0.02, rel=1e-12)
    assert rep.overshoot_l1 == pytest.approx(0.5 * 0.02, rel=1e-12)
    assert rep.overshoot_l2 == pytest.approx(np.sqrt(0.5) * 0.02, rel=1e-12)
    assert rep.overshoot_l4 == pytest.approx(0.5**0.25 * 0.02, rel=1e-12)
    assert rep.congested_div_l2 == pytest.approx(np.sqrt(0.5) * 0.4, rel=1e-12)
    assert rep.congested_fraction == pytest.approx(0.5, rel=1e-12)
    pi_hi = p.pressure(1.02)
    comp = 0.5 * pi_hi * 0.02 + 0.5 * p.pressure(0.5) * 0.5
    assert rep.complementarity == pytest.approx(comp, rel=1e-10)
    assert rep.pressure_mass == pytest.approx(
        0.5 * pi_hi + 0.5 * p.pressure(0.5), rel=1e-10
    )


def test_diagnostics_clean_state_is_silent():
    m = build_mesh(1, 32, ZERO_1D)
    rep = congestion_diagnostics(
        m, np.full(32, 0.5), np.full(32, 3.0), CongestionPressure(alpha=160.0)
    )
    assert rep.overshoot_linf == 0.0
    assert rep.overshoot_l1 == 0.0
    assert rep.congested_div_l2 == 0.0
    assert rep.congested_fraction == 0.0
    assert rep.complementarity < 1e-12


def test_stiffening_shrinks_overshoot_response():
    # for a fixed overshoot the complementarity pairing grows with alpha,
    # while below the level the pairing collapses: the law gets stiffer
    below = np.array([0.95])
    for a1, a2 in ((10.0, 40.0), (40.0, 160.0)):
        p1, p2 = CongestionPressure(a1), CongestionPressure(a2)
        assert p2.pressure(below) < p1.pressure(below)
        assert p2.pressure(1.05) > p1.pressure(1.05)
