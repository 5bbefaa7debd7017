"""Stiff congestion pressure and its saturation diagnostics.

The hard constraint rho <= rho* is approached through the barrier-free
stiff law pi(rho) = (rho/rho*)^alpha with alpha >> 1: negligible below the
congestion level, order one at it, and steeply growing above.  Its pressure
potential Pi(rho) = (rho/rho*)^alpha / (alpha - 1) satisfies the convexity
identity rho * Pi'(rho) - Pi(rho) = pi(rho), which is what ties the energy
ledger's potential terms to the momentum equation's pressure term.

Diagnostics quantify how well a computed state honors the constraint set:
overshoot norms of (rho - rho*)_+, divergence mass on the nearly congested
region, and the complementarity pairing pi * |1 - rho/rho*| that must vanish
in the stiff limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ALPHA_LADDER = (10.0, 40.0, 160.0, 640.0)
DEFAULT_CONGESTION_MARGIN = 0.01

_VACUUM = 1e-12


class AlphaTooSmall(Exception):
    """Stiffness exponent must exceed 1 for an integrable potential."""


class CongestionPressure:
    """Power-law congestion pressure pi = (rho/rho*)^alpha with potential."""

    def __init__(self, alpha: float, rho_star: float = 1.0):
        if alpha <= 1.0:
            raise AlphaTooSmall(f"alpha must be > 1, got {alpha}")
        if rho_star <= 0.0:
            raise ValueError(f"rho_star must be positive, got {rho_star}")
        self.alpha = float(alpha)
        self.rho_star = float(rho_star)

    def _pow(self, rho, expo):
        """rho**expo via exp(expo*log(rho)), zero below the vacuum floor."""
        rho = np.asarray(rho, dtype=float)
        safe = np.maximum(rho, _VACUUM)
        out = np.exp(expo * np.log(safe))
        return np.where(rho < _VACUUM, 0.0, out)

    def pressure(self, rho):
        return self._pow(np.asarray(rho) / self.rho_star, self.alpha)

    def potential(self, rho):
        return self.pressure(rho) / (self.alpha - 1.0)

    def dpotential(self, rho):
        a, rs = self.alpha, self.rho_star
        return a / ((a - 1.0) * rs) * self._pow(np.asarray(rho) / rs, a - 1.0)

    def d2potential(self, rho):
        a, rs = self.alpha, self.rho_star
        return a / rs**2 * self._pow(np.asarray(rho) / rs, a - 2.0)

    def bregman(self, a, b):
        """Pi(a) - Pi(b) - Pi'(b)(a - b), nonnegative by convexity."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return self.potential(a) - self.potential(b) - self.dpotential(b) * (a - b)


@dataclass
class CongestionReport:
    """Constraint-quality metrics of one density/velocity snapshot."""

    overshoot_l1: float
    overshoot_l2: float
    overshoot_l4: float
    overshoot_linf: float
    congested_div_l2: float
    complementarity: float
    pressure_mass: float
    congested_fraction: float


def pressure_eval(pressure: CongestionPressure, rho):
    """Stiff congestion pressure pi(rho) on a density field."""
    return pressure.pressure(rho)


def pressure_potential(pressure: CongestionPressure, rho):
    """Convex pressure potential with rho*Pi' - Pi = pi."""
    return pressure.potential(rho)


def congestion_diagnostics(
    mesh,
    rho,
    div_h,
    pressure: CongestionPressure,
    tau_c: float = DEFAULT_CONGESTION_MARGIN,
) -> CongestionReport:
    """Measure constraint violation and near-congestion divergence.

    The congested region is {rho > rho* - tau_c}; its divergence mass is
    reported in L2 so a time series can be aggregated into the space-time
    norm by root-sum-square weighting with dt.
    """
    vol = mesh.cell_volume
    rho = np.asarray(rho, dtype=float)
    over = np.maximum(rho - pressure.rho_star, 0.0)
    mask = rho > pressure.rho_star - tau_c
    pi = pressure.pressure(rho)
    comp = float(vol * np.sum(pi * np.abs(1.0 - rho / pressure.rho_star)))
    div_masked = np.where(mask, np.asarray(div_h, dtype=float), 0.0)
    return CongestionReport(
        overshoot_l1=float(vol * np.sum(over)),
        overshoot_l2=float(np.sqrt(vol * np.sum(over**2))),
        overshoot_l4=float((vol * np.sum(over**4)) ** 0.25),
        overshoot_linf=float(np.max(over)) if over.size else 0.0,
        congested_div_l2=float(np.sqrt(vol * np.sum(div_masked**2))),
        complementarity=comp,
        pressure_mass=float(vol * np.sum(pi)),
        congested_fraction=float(vol * np.sum(mask)),
    )
