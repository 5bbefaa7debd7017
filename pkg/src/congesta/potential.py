"""Implicitly-constituted viscous potential and its numeric Legendre transform.

The potential acts on a symmetric velocity-gradient tensor D through two
scalar convex profiles applied to the orthogonal deviator/trace split,

    F(D) = phi(|D0|) + psi(tr D),

with the power-law family

    phi(t)   = (mu0/q) * ((mu1 + t^2)^(q/2) - mu1^(q/2)),
    psi(tau) = eta0   * ((eta1 + tau^2)^(q/2) - eta1^(q/2)).

The value at zero is subtracted so F(0) = 0 holds for every parameter choice.
Smoothing by a radius-delta mollifier is realized as a positive-weight
quadrature convolution of the even-extended profiles: the smoothed profile is
then exactly convex, exactly even, and its reported derivative is exactly the
derivative of the reported value, which the dual-gap audits rely on.

Convex conjugates have no closed form once delta > 0 or mu1, eta1 > 0, so they
are tabulated parametrically: along a log-spaced grid of radii t the pair
(s, value) = (phi'(t), s*t - phi(t)) sits exactly on the conjugate graph.
Interpolation is monotone cubic in log-log coordinates, which reproduces pure
power laws (the mu1 = eta1 = 0, delta = 0 case) to roundoff and carries exact
power-law tails beyond the table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .tensors import SymTensor, contract, deviatoric_split

_TINY_RADIUS = 1e-14


class NonSmoothPoint(Exception):
    """Subgradient requested at a kink of an unmollified profile."""


class ConjugateOverflow(Exception):
    """Dual argument falls outside the tabulated range and its power tails."""


@dataclass(frozen=True)
class PotentialSpec:
    """Parameters of the power-law viscous potential.

    mu0 scales the shear (deviatoric) branch and must be positive; eta0
    scales the bulk (trace) branch and may vanish in dimension >= 2.  The
    exponent q must exceed 1 so the potential is superlinear.
    """

    mu0: float
    mu1: float = 0.0
    eta0: float = 0.0
    eta1: float = 0.0
    q: float = 2.0

    def __post_init__(self):
        if not self.q > 1.0:
            raise ValueError(f"exponent q must be > 1, got {self.q}")
        if not self.mu0 > 0.0:
            raise ValueError(f"shear coefficient mu0 must be > 0, got {self.mu0}")
        for name in ("mu1", "eta0", "eta1"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    def validate_for_dim(self, dim: int) -> None:
        # in 1d the deviator vanishes identically, so all dissipation must
        # come from the trace branch
        if dim == 1 and not self.eta0 > 0.0:
            raise ValueError("dimension 1 requires eta0 > 0 (no deviatoric part)")

    @property
    def growth_floor_mu(self) -> float:
        """Delta-independent coefficient of the q-growth floor on the deviator."""
        return self.mu0 / (self.q * 2.0 ** (self.q / 2.0))


class _Profile:
    """Scalar convex profile c*((b + t^2)^(q/2) - b^(q/2)), even in t."""

    def __init__(self, c, b, q):
        self.c = float(c)
        self.b = float(b)
        self.q = float(q)

    def val(self, t):
        t = np.asarray(t, dtype=float)
        return self.c * ((self.b + t * t) ** (self.q / 2.0) - self.b ** (self.q / 2.0))

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        # odd in t through the explicit factor; exponent q/2-1 may be negative,
        # but then it multiplies t -> t^(q-1) which vanishes at 0 for q > 1
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.c * self.q * t * (self.b + t * t) ** (self.q / 2.0 - 1.0)
        return np.where(t == 0.0, 0.0, out)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                self.c
                * self.q
                * (self.b + t * t) ** (self.q / 2.0 - 2.0)
                * (self.b + (self.q - 1.0) * t * t)
            )
        if self.b == 0.0:
            at0 = np.inf if self.q < 2.0 else (0.0 if self.q > 2.0 else self.c * self.q)
            out = np.where(t == 0.0, at0, out)
        return out

    @property
    def is_smooth_everywhere(self):
        # second derivative stays bounded at the origin
        return self.b > 0.0 or self.q >= 2.0


def _bump_nodes(n_nodes: int = 32):
    """Symmetric positive quadrature of the unit bump exp(-1/(1-x^2))."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    weights = w * np.exp(-1.0 / (1.0 - x * x))
    # symmetrize against roundoff, then normalize to unit mass
    weights = 0.5 * (weights + weights[::-1])
    weights /= weights.sum()
    return x, weights


class _MollifiedProfile:
    """Positive-weight convolution of a profile with a width-delta bump.

    The value at 0 is subtracted so the smoothed profile still vanishes at
    the origin.  Being a convex combination of shifted convex functions, the
    result is exactly convex and C^1.
    """

    def __init__(self, base: _Profile, delta: float, n_nodes: int = 32):
        self.base = base
        self.delta = float(delta)
        nodes, weights = _bump_nodes(n_nodes)
        self._shifts = self.delta * nodes
        self._weights = weights
        self._offset = float(np.dot(weights, base.val(np.abs(self._shifts))))

    def val(self, t):
        t = np.asarray(t, dtype=float)
        arg = np.abs(t[..., None] - self._shifts)
        return (self.base.val(arg) @ self._weights) - self._offset

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        arg = t[..., None] - self._shifts
        signed = np.sign(arg) * self.base.d1(np.abs(arg))
        return signed @ self._weights

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        arg = np.abs(t[..., None] - self._shifts)
        return self.base.d2(arg) @ self._weights

    @property
    def is_smooth_everywhere(self):
        return True


class _ConjugateTable:
    """Numeric Legendre transform of a convex profile.

    Nodes are parametric: for each radius t on a log grid the dual point is
    (s, v) = (f'(t), s t - f(t)), exactly on the conjugate graph.  A query
    first reads the argmax t(s) from a monotone cubic in log-log (power-law
    continuation beyond the table), then polishes it with a few Newton steps
    on f'(t) = s and returns s t - f(t) at the polished point.  Any t gives
    a value <= f*(s), so the result is a guaranteed lower bound whose defect
    is quadratic in the Newton residual; Fenchel-Young gaps computed from it
    can only err on the nonnegative side, up to roundoff.
    """

    T_LO, T_HI = 1e-9, 1e9
    POINTS_PER_DECADE = 60
    NEWTON_STEPS = 3

    def __init__(self, profile, q: float):
        self._profile = profile
        ndec = int(np.log10(self.T_HI / self.T_LO))
        tgrid = np.geomspace(self.T_LO, self.T_HI, ndec * self.POINTS_PER_DECADE + 1)
        s = np.asarray(profile.d1(tgrid), dtype=float)
        v = s * tgrid - np.asarray(profile.val(tgrid), dtype=float)
        keep = (s > 0.0) & (v > 0.0)
        s, t = s[keep], tgrid[keep]
        ds = np.diff(s)
        keep2 = np.concatenate([[True], ds > 0.0])
        s, t = s[keep2], t[keep2]
        if s.size < 8:
            raise ValueError("degenerate profile: conjugate table has no spread")
        self._logs = np.log(s)
        self._logt = np.log(t)
        self._interp = PchipInterpolator(self._logs, self._logt, extrapolate=False)
        # one-sided log-log slopes for tail continuation
        self._lo_slope = (self._logt[1] - self._logt[0]) / (self._logs[1] - self._logs[0])
        self._hi_slope = (self._logt[-1] - self._logt[-2]) / (
            self._logs[-1] - self._logs[-2]
        )
        self._s_max = s[-1]
        self.q_dual = q / (q - 1.0)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0.0):
            raise ValueError("conjugate table takes nonnegative arguments")
        if np.any(s > self._s_max):
            raise ConjugateOverflow(
                f"dual argument {float(np.max(s)):.3e} beyond tabulated range "
                f"(max {self._s_max:.3e}); stress far outside the physical regime"
            )
        out = np.zeros_like(s)
        pos = s > 0.0
        if np.any(pos):
            sp = s[pos]
            ls = np.log(sp)
            lt = np.empty_like(ls)
            lo = ls < self._logs[0]
            hi = ls > self._logs[-1]
            mid = ~(lo | hi)
            lt[mid] = self._interp(ls[mid])
            lt[lo] = self._logt[0] + self._lo_slope * (ls[lo] - self._logs[0])
            lt[hi] = self._logt[-1] + self._hi_slope * (ls[hi] - self._logs[-1])
            t = np.exp(lt)
            prof = self._profile
            for _ in range(self.NEWTON_STEPS):
                grad = np.asarray(prof.d1(t), dtype=float) - sp
                curv = np.maximum(np.asarray(prof.d2(t), dtype=float), 1e-300)
                # multiplicative trust region: guards the degenerate-curvature
                # corner (q > 2 power laws at the origin) without touching the
                # converged regime
                t = np.clip(t - grad / curv, 0.25 * t, 4.0 * t)
            val = sp * t - np.asarray(prof.val(t), dtype=float)
            # t = 0 realizes value 0, so the sup is never below it
            out[pos] = np.maximum(val, 0.0)
        return out


class _ZeroProfileConjugate:
    """Conjugate of the identically-zero profile: 0 at 0, +inf elsewhere."""

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(np.abs(s) > 1e-12):
            raise ConjugateOverflow(
                "stress has a component the potential cannot produce "
                "(zero profile branch paired with nonzero dual argument)"
            )
        return np.zeros_like(s)


@dataclass
class DualPair:
    """A primal/dual evaluation with its Fenchel-Young gap."""

    primal: float
    dual: float
    stress: SymTensor
    gap: float


class MollifiedPotential:
    """Evaluations, subgradients and conjugates of the smoothed potential."""

    def __init__(self, spec: PotentialSpec, delta: float = 0.0):
        if delta < 0.0:
            raise ValueError("mollification radius must be >= 0")
        self.spec = spec
        self.delta = float(delta)
        dev = _Profile(spec.mu0 / spec.q, spec.mu1, spec.q)
        tr = _Profile(spec.eta0, spec.eta1, spec.q) if spec.eta0 > 0.0 else None
        if self.delta > 0.0:
            dev = _MollifiedProfile(dev, self.delta)
            if tr is not None:
                tr = _MollifiedProfile(tr, self.delta)
        self.dev_profile = dev
        self.tr_profile = tr
        self._phistar = _ConjugateTable(dev, spec.q)
        self._psistar = (
            _ConjugateTable(tr, spec.q) if tr is not None else _ZeroProfileConjugate()
        )
        self.kink_hits = 0

    # -- scalar profile access (vectorized over arrays) ------------------------

    def phi(self, r):
        return self.dev_profile.val(r)

    def dphi(self, r):
        return self.dev_profile.d1(r)

    def d2phi(self, r):
        return self.dev_profile.d2(r)

    def psi(self, tau):
        if self.tr_profile is None:
            return np.zeros_like(np.asarray(tau, dtype=float))
        return self.tr_profile.val(tau)

    def dpsi(self, tau):
        if self.tr_profile is None:
            return np.zeros_like(np.asarray(tau, dtype=float))
        return self.tr_profile.d1(tau)

    def d2psi(self, tau):
        if self.tr_profile is None:
            return np.zeros_like(np.asarray(tau, dtype=float))
        return self.tr_profile.d2(tau)

    def phistar(self, s):
        return self._phistar(s)

    def psistar(self, y):
        # psi is even, so its conjugate is even
        return self._psistar(np.abs(y))

    # -- tensor-level operations -----------------------------------------------

    def eval(self, d_tensor: SymTensor) -> float:
        """Potential value F_delta(D) = phi_delta(|D0|) + psi_delta(|tr D|)."""
        dev, tau = deviatoric_split(d_tensor)
        r = dev.norm()
        return float(self.phi(r) + self.psi(abs(tau)))

    def subgradient(self, d_tensor: SymTensor) -> SymTensor:
        """The stress phi'(|D0|) D0/|D0| + psi'(tr D) I.

        At |D0| = 0 the deviatoric branch returns its minimal-norm element
        (zero); when the unmollified profile is merely C^1 there this is the
        whole subdifferential anyway, and the sample is counted in
        ``kink_hits`` when second-derivative blowup makes it delicate.
        """
        dev, tau = deviatoric_split(d_tensor)
        r = dev.norm()
        if self.delta == 0.0 and not self.dev_profile.is_smooth_everywhere:
            self._kink_guard(self.dev_profile, r)
        out = SymTensor.zero(d_tensor.dim)
        if r > _TINY_RADIUS:
            out = out + (float(self.dphi(r)) / r) * dev
        elif self.delta == 0.0 and not self.dev_profile.is_smooth_everywhere:
            self.kink_hits += 1
        psi_slope = float(self.dpsi(tau))
        if psi_slope != 0.0:
            out = out + psi_slope * SymTensor.identity(d_tensor.dim)
        return out

    def conjugate(self, s_tensor: SymTensor) -> float:
        """Numeric Legendre transform F*_delta(S) = phi*(|S0|) + psi*(tr S / d)."""
        dev, sigma = deviatoric_split(s_tensor)
        r = dev.norm()
        return float(self.phistar(r) + self.psistar(sigma / s_tensor.dim))

    def _kink_guard(self, profile, r):
        # the profile family is C^1 for q > 1; a genuine slope jump would
        # indicate a misconfigured profile and must not be silently averaged
        h = 1e-8 * (1.0 + r)
        left = profile.d1(max(r - h, 0.0))
        right = profile.d1(r + h)
        if abs(float(right) - float(left)) > 1e-5 * (1.0 + abs(float(right))):
            if r > h * 4.0:
                raise NonSmoothPoint(
                    f"profile slope jumps at radius {r:.3e} with delta = 0"
                )


def eval_F(pot: MollifiedPotential, d_tensor: SymTensor) -> float:
    """Dissipation potential F(D) evaluated on one symmetric tensor."""
    return pot.eval(d_tensor)


def subgradient(pot: MollifiedPotential, d_tensor: SymTensor) -> SymTensor:
    """Constitutive stress S in the subdifferential of F at D."""
    return pot.subgradient(d_tensor)


def conjugate(pot: MollifiedPotential, s_tensor: SymTensor) -> float:
    """Legendre transform F*(S) evaluated on one symmetric tensor."""
    return pot.conjugate(s_tensor)


def fenchel_gap(pot: MollifiedPotential, d_tensor: SymTensor, s_tensor: SymTensor) -> DualPair:
    """Evaluate F(D) + F*(S) - S:D, which is >= 0 with equality on the graph.

    The gap is returned unclamped; tiny negative values bound the combined
    table and quadrature error.
    """
    primal = pot.eval(d_tensor)
    dual = pot.conjugate(s_tensor)
    pairing = contract(s_tensor, d_tensor)
    return DualPair(primal=primal, dual=dual, stress=s_tensor, gap=primal + dual - pairing)


# -- packed-field evaluation used by the Galerkin assembly --------------------


def stress_field(pot: MollifiedPotential, dev_norm, trace, dev_entries, dim):
    """Stress entries at many points from packed deviator data.

    Parameters are arrays over points: dev_norm (P,), trace (P,), and packed
    deviator entries (P, ncomp).  Returns packed stress entries (P, ncomp).
    """
    r = np.asarray(dev_norm, dtype=float)
    coef = np.zeros_like(r)
    mask = r > _TINY_RADIUS
    coef[mask] = pot.dphi(r[mask]) / r[mask]
    out = dev_entries * coef[:, None]
    out[:, :dim] += pot.dpsi(trace)[:, None]
    return out


def stress_tangent_coeffs(pot: MollifiedPotential, dev_norm, trace):
    """Coefficients (a, b, c) of the Hessian action of F_delta at many points.

    The tangent applied to a symmetric H is
        a * (D0:H0) D0 / r^2  +  b * H0  +  c * tr(H) I,
    with b = phi'(r)/r, a = phi''(r) - b, c = psi''(tau).  At r ~ 0 the
    rank-one part is dropped and b falls back to phi'' (capped), keeping the
    tangent positive semidefinite.
    """
    r = np.asarray(dev_norm, dtype=float)
    b = np.empty_like(r)
    a = np.empty_like(r)
    mask = r > _TINY_RADIUS
    b[mask] = pot.dphi(r[mask]) / r[mask]
    a[mask] = pot.d2phi(r[mask]) - b[mask]
    if np.any(~mask):
        d2 = np.minimum(pot.d2phi(np.zeros(np.count_nonzero(~mask))), 1e12)
        b[~mask] = d2
        a[~mask] = 0.0
    # guard profiles whose curvature blows up at isolated radii
    a = np.clip(a, -1e12, 1e12)
    b = np.clip(b, 0.0, 1e12)
    c = np.clip(pot.d2psi(trace), 0.0, 1e12)
    return a, b, c
