"""Unit-box meshes, in/out-flow boundary data, and admissible initial states.

The domain is always (0,1)^d with d in {1,2}, covered by a uniform cell grid.
Boundary velocity data is given as one constant vector per side; the inflow
set is where uB.n < 0 and ties go to the outflow set.  The interior extension
of uB is built analytically so that its divergence equals the (required
nonnegative) net boundary flux everywhere, exactly: a per-axis linear normal
part carries the flux, and a divergence-free stream-function corrector
restores the tangential trace away from corners.  Per-side constant data that
is not uniform is discontinuous at corners, so the tangential match fades
over a fixed margin there; the residual mismatch is reported, not hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VACUUM_FLOOR = 1e-12

_SIDES = {1: ("left", "right"), 2: ("left", "right", "bottom", "top")}


class InvalidBoundarySpec(Exception):
    """Malformed boundary velocity specification."""


class NegativeFlux(Exception):
    """Net boundary flux of uB is negative; no admissible extension exists."""


class MassExceedsOne(Exception):
    """Initial mean density is not strictly below the congestion level."""


class MomentumOnVacuum(Exception):
    """Nonzero initial momentum on a vacuum cell."""


class Mesh:
    """Uniform cell grid on (0,1)^d with explicit boundary faces.

    Interior faces are implicit (handled by array slicing in the transport
    scheme); boundary faces carry their owner cell, outward normal, center
    and area, plus the inflow/outflow partition once velocity data is known.
    """

    def __init__(self, dim, shape):
        if dim not in (1, 2):
            raise InvalidBoundarySpec(f"dim must be 1 or 2, got {dim}")
        shape = tuple(int(s) for s in shape)
        if len(shape) != dim or any(s < 4 for s in shape):
            raise InvalidBoundarySpec(
                f"resolution must give >= 4 cells per axis, got {shape}"
            )
        self.dim = dim
        self.shape = shape
        self.h = tuple(1.0 / s for s in shape)
        self.ncells = int(np.prod(shape))
        self.cell_volume = float(np.prod(self.h))
        self.centers = self._build_centers()
        self._build_boundary_faces()
        # filled by attach_boundary_velocity
        self.bface_un = None
        self.gamma_in = None
        self.gamma_out = None

    def _build_centers(self):
        axes = [
            (np.arange(s) + 0.5) * h for s, h in zip(self.shape, self.h)
        ]
        if self.dim == 1:
            return axes[0][:, None]
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def _build_boundary_faces(self):
        cells, normals, centers, areas, sides = [], [], [], [], []
        if self.dim == 1:
            (n,) = self.shape
            cells = [0, n - 1]
            normals = [[-1.0], [1.0]]
            centers = [[0.0], [1.0]]
            areas = [1.0, 1.0]
            sides = ["left", "right"]
        else:
            nx, ny = self.shape
            hx, hy = self.h
            ys = (np.arange(ny) + 0.5) * hy
            xs = (np.arange(nx) + 0.5) * hx
            for iy in range(ny):
                cells.append(0 * ny + iy)
                normals.append([-1.0, 0.0])
                centers.append([0.0, ys[iy]])
                areas.append(hy)
                sides.append("left")
            for iy in range(ny):
                cells.append((nx - 1) * ny + iy)
                normals.append([1.0, 0.0])
                centers.append([1.0, ys[iy]])
                areas.append(hy)
                sides.append("right")
            for ix in range(nx):
                cells.append(ix * ny + 0)
                normals.append([0.0, -1.0])
                centers.append([xs[ix], 0.0])
                areas.append(hx)
                sides.append("bottom")
            for ix in range(nx):
                cells.append(ix * ny + (ny - 1))
                normals.append([0.0, 1.0])
                centers.append([xs[ix], 1.0])
                areas.append(hx)
                sides.append("top")
        self.bface_cell = np.asarray(cells, dtype=int)
        self.bface_normal = np.asarray(normals, dtype=float)
        self.bface_center = np.asarray(centers, dtype=float)
        self.bface_area = np.asarray(areas, dtype=float)
        self.bface_side = np.asarray(sides)

    def attach_boundary_velocity(self, ub_spec):
        """Record uB per face and split the boundary into inflow/outflow."""
        ub = np.zeros_like(self.bface_normal)
        for side, vec in ub_spec.items():
            ub[self.bface_side == side] = vec
        self.bface_ub = ub
        self.bface_un = np.einsum("fd,fd->f", ub, self.bface_normal)
        # sign ties (u.n == 0) belong to the outflow set
        self.gamma_in = self.bface_un < 0.0
        self.gamma_out = ~self.gamma_in

    def face_centers(self, axis):
        """Centers of all faces orthogonal to `axis`, boundary included."""
        if self.dim == 1:
            (n,) = self.shape
            return (np.arange(n + 1) * self.h[0])[:, None]
        nx, ny = self.shape
        hx, hy = self.h
        if axis == 0:
            x = np.arange(nx + 1) * hx
            y = (np.arange(ny) + 0.5) * hy
        else:
            x = (np.arange(nx) + 0.5) * hx
            y = np.arange(ny + 1) * hy
        gx, gy = np.meshgrid(x, y, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])


def _check_ub_spec(dim, ub_spec):
    want = set(_SIDES[dim])
    got = set(ub_spec)
    if got != want:
        raise InvalidBoundarySpec(
            f"boundary spec must name exactly the sides {sorted(want)}, got {sorted(got)}"
        )
    out = {}
    for side, vec in ub_spec.items():
        arr = np.atleast_1d(np.asarray(vec, dtype=float))
        if arr.shape != (dim,):
            raise InvalidBoundarySpec(
                f"side {side!r}: velocity must have {dim} components, got {arr.shape}"
            )
        out[side] = arr
    return out


def build_mesh(dim, resolution, ub_spec):
    """Create the grid and classify its boundary against the given uB."""
    if np.isscalar(resolution):
        shape = (int(resolution),) * dim
    else:
        shape = tuple(int(r) for r in resolution)
    mesh = Mesh(dim, shape)
    mesh.attach_boundary_velocity(_check_ub_spec(dim, ub_spec))
    return mesh


# ---------------------------------------------------------------------------
# smooth 1d shape functions for the 2d corrector


def _s5(r):
    r = np.clip(r, 0.0, 1.0)
    return ((6.0 * r - 15.0) * r + 10.0) * r**3


def _s5p(r):
    rc = np.clip(r, 0.0, 1.0)
    return 30.0 * rc**2 * (rc - 1.0) ** 2


def _s5pp(r):
    rc = np.clip(r, 0.0, 1.0)
    return 60.0 * rc * (2.0 * rc - 1.0) * (rc - 1.0)


_ETA_SUPPORT = 0.45
_CORNER_MARGIN = 0.1


def _eta(s):
    return s * (1.0 - _s5(s / _ETA_SUPPORT))


def _etap(s):
    r = s / _ETA_SUPPORT
    return (1.0 - _s5(r)) - s * _s5p(r) / _ETA_SUPPORT


def _etapp(s):
    r = s / _ETA_SUPPORT
    return -2.0 * _s5p(r) / _ETA_SUPPORT - s * _s5pp(r) / _ETA_SUPPORT**2


def _beta(y):
    return _s5(y / _CORNER_MARGIN) * _s5((1.0 - y) / _CORNER_MARGIN)


def _betap(y):
    m = _CORNER_MARGIN
    return (
        _s5p(y / m) / m * _s5((1.0 - y) / m)
        - _s5(y / m) * _s5p((1.0 - y) / m) / m
    )


def _betapp(y):
    m = _CORNER_MARGIN
    return (
        _s5pp(y / m) / m**2 * _s5((1.0 - y) / m)
        - 2.0 * _s5p(y / m) * _s5p((1.0 - y) / m) / m**2
        + _s5(y / m) * _s5pp((1.0 - y) / m) / m**2
    )


class Extension1D:
    """Linear interior extension of endpoint velocities; div = net flux."""

    def __init__(self, u_left, u_right):
        self.u0 = float(u_left)
        self.u1 = float(u_right)

    def value(self, points):
        x = np.asarray(points, dtype=float)[..., 0]
        return (self.u0 + (self.u1 - self.u0) * x)[..., None]

    def grad(self, points):
        x = np.asarray(points, dtype=float)[..., 0]
        g = np.empty(x.shape + (1, 1))
        g[..., 0, 0] = self.u1 - self.u0
        return g

    def div(self, points):
        x = np.asarray(points, dtype=float)[..., 0]
        return np.full_like(x, self.u1 - self.u0)


class Extension2D:
    """Flux-carrying normal part plus a divergence-free tangential corrector.

    value = (p(x) + Tx, q(y) + Ty) with p, q linear interpolants of the
    normal components and T the perpendicular gradient of a stream function
    built from corner-faded face bumps.  div(value) = p' + q' = net flux,
    exactly and everywhere.
    """

    def __init__(self, ub):
        self.ub = ub
        a, b = ub["left"], ub["right"]
        c, d = ub["bottom"], ub["top"]
        self.p0, self.p1 = a[0], b[0]
        self.q0, self.q1 = c[1], d[1]
        # tangential targets per side: (constant, slope of the part to remove)
        self.gl = (a[1], None)
        self.gr = (b[1], None)
        self.hb = (c[0], None)
        self.ht = (d[0], None)

    # normal interpolants
    def _p(self, x):
        return self.p0 + (self.p1 - self.p0) * x

    def _q(self, y):
        return self.q0 + (self.q1 - self.q0) * y

    def _g(self, const, y, qlike):
        # mismatch (const - interpolant) faded at the corners
        interp = self._q(y) if qlike else self._p(y)
        slope = (self.q1 - self.q0) if qlike else (self.p1 - self.p0)
        g = (const - interp) * _beta(y)
        gp = -slope * _beta(y) + (const - interp) * _betap(y)
        gpp = -2.0 * slope * _betap(y) + (const - interp) * _betapp(y)
        return g, gp, gpp

    def _pieces(self, x, y):
        gl, glp, glpp = self._g(self.gl[0], y, qlike=True)
        gr, grp, grpp = self._g(self.gr[0], y, qlike=True)
        hb, hbp, hbpp = self._g(self.hb[0], x, qlike=False)
        ht, htp, htpp = self._g(self.ht[0], x, qlike=False)
        ex, exp_, expp = _eta(x), _etap(x), _etapp(x)
        e1x, e1xp, e1xpp = _eta(1.0 - x), _etap(1.0 - x), _etapp(1.0 - x)
        ey, eyp, eypp = _eta(y), _etap(y), _etapp(y)
        e1y, e1yp, e1ypp = _eta(1.0 - y), _etap(1.0 - y), _etapp(1.0 - y)
        tx = -ex * glp + e1x * grp + eyp * hb + e1yp * ht
        ty = exp_ * gl + e1xp * gr - ey * hbp + e1y * htp
        dtx_dx = -exp_ * glp - e1xp * grp + eyp * hbp + e1yp * htp
        dtx_dy = -ex * glpp + e1x * grpp + eypp * hb - e1ypp * ht
        dty_dx = expp * gl - e1xpp * gr - ey * hbpp + e1y * htpp
        dty_dy = exp_ * glp + e1xp * grp - eyp * hbp - e1yp * htp
        return tx, ty, dtx_dx, dtx_dy, dty_dx, dty_dy

    def value(self, points):
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        tx, ty, *_ = self._pieces(x, y)
        return np.stack([self._p(x) + tx, self._q(y) + ty], axis=-1)

    def grad(self, points):
        """grad[..., i, j] = d u_j / d x_i."""
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        _, _, dtx_dx, dtx_dy, dty_dx, dty_dy = self._pieces(x, y)
        g = np.empty(x.shape + (2, 2))
        g[..., 0, 0] = (self.p1 - self.p0) + dtx_dx
        g[..., 0, 1] = dty_dx
        g[..., 1, 0] = dtx_dy
        g[..., 1, 1] = (self.q1 - self.q0) + dty_dy
        return g

    def div(self, points):
        pts = np.asarray(points, dtype=float)
        x = pts[..., 0]
        return np.full_like(x, (self.p1 - self.p0) + (self.q1 - self.q0))


@dataclass
class BoundaryData:
    """Boundary velocity with its admissible interior extension."""

    ub: dict
    extension: object
    rhob: float
    net_flux: float
    trace_error: float
    mesh: object = None

    def sup_norm(self, samples: int = 64) -> float:
        """Max pointwise |uB extension| over a sampling grid (for bounds)."""
        dim = 1 if isinstance(self.extension, Extension1D) else 2
        xs = (np.arange(samples) + 0.5) / samples
        if dim == 1:
            pts = xs[:, None]
        else:
            gx, gy = np.meshgrid(xs, xs, indexing="ij")
            pts = np.column_stack([gx.ravel(), gy.ravel()])
        vals = self.extension.value(pts)
        return float(np.max(np.linalg.norm(vals, axis=-1)))


def extend_uB(mesh: Mesh, ub_spec, rhob: float = 1.0) -> BoundaryData:
    """Build the divergence-nonnegative interior extension of uB.

    Raises NegativeFlux when the net boundary flux is negative, since then no
    extension with nonnegative divergence can match the normal trace.
    """
    ub = _check_ub_spec(mesh.dim, ub_spec)
    mesh.attach_boundary_velocity(ub)
    flux = float(np.dot(mesh.bface_un, mesh.bface_area))
    if flux < -1e-12:
        raise NegativeFlux(
            f"net boundary flux {flux:.3e} is negative; inflow exceeds outflow"
        )
    if not 0.0 < rhob <= 1.0:
        raise InvalidBoundarySpec(f"rhoB must lie in (0, 1], got {rhob}")
    if mesh.dim == 1:
        ext = Extension1D(ub["left"][0], ub["right"][0])
    else:
        ext = Extension2D(ub)
    # residual tangential mismatch on the boundary (zero for uniform data)
    terr = 0.0
    for side in _SIDES[mesh.dim]:
        sel = mesh.bface_side == side
        vals = ext.value(mesh.bface_center[sel])
        terr = max(terr, float(np.max(np.abs(vals - ub[side][None, :]))))
    return BoundaryData(
        ub=ub,
        extension=ext,
        rhob=float(rhob),
        net_flux=flux,
        trace_error=terr,
        mesh=mesh,
    )


@dataclass
class InitialData:
    """Cellwise admissible initial density and momentum."""

    rho0: np.ndarray
    m0: np.ndarray
    u0: np.ndarray
    mean_density: float


def validate_initial(mesh: Mesh, rho0, m0) -> InitialData:
    """Check admissibility and recover the initial velocity m0/rho0.

    Density must lie in [0,1] cellwise with strict sub-unit mean; momentum
    must vanish on vacuum cells, where the recovered velocity is set to zero.
    """
    rho0 = np.asarray(rho0, dtype=float).ravel()
    m0 = np.asarray(m0, dtype=float).reshape(mesh.ncells, mesh.dim)
    if rho0.shape != (mesh.ncells,):
        raise ValueError(f"rho0 must have {mesh.ncells} cells, got {rho0.shape}")
    if np.any(rho0 < -1e-14) or np.any(rho0 > 1.0 + 1e-12):
        bad = float(rho0.min()), float(rho0.max())
        raise MassExceedsOne(
            f"initial density must lie in [0, 1] cellwise, got range {bad}"
        )
    mean = float(rho0.sum() * mesh.cell_volume)
    if mean >= 1.0 - 1e-12:
        raise MassExceedsOne(f"mean initial density {mean:.6f} must be < 1")
    vac = rho0 <= VACUUM_FLOOR
    if np.any(np.abs(m0[vac]) > 1e-12):
        raise MomentumOnVacuum("nonzero momentum on a vacuum cell")
    u0 = np.zeros_like(m0)
    u0[~vac] = m0[~vac] / rho0[~vac, None]
    return InitialData(rho0=rho0, m0=m0, u0=u0, mean_density=mean)


# ---------------------------------------------------------------------------
# named initial profiles (evaluated at cell centers)


def _parse_kv(body, defaults):
    out = dict(defaults)
    if body:
        for item in body.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" in item:
                key, val = item.split("=", 1)
                out[key.strip()] = float(val)
            else:
                # single positional value maps to the first default key
                out[next(iter(defaults))] = float(item)
    return out


def density_profile(spec: str, mesh: Mesh) -> np.ndarray:
    """Evaluate a named density profile, e.g. 'uniform:0.5' or 'cosine:...'."""
    name, _, body = spec.partition(":")
    name = name.strip()
    x = mesh.centers[:, 0]
    if name == "uniform":
        kv = _parse_kv(body, {"value": 0.5})
        return np.full(mesh.ncells, kv["value"])
    if name == "cosine":
        kv = _parse_kv(body, {"base": 0.5, "amp": 0.3, "k": 1.0})
        out = kv["base"] + kv["amp"] * np.cos(np.pi * kv["k"] * x)
        if mesh.dim == 2:
            out = kv["base"] + kv["amp"] * np.cos(np.pi * kv["k"] * x) * np.cos(
                np.pi * kv["k"] * mesh.centers[:, 1]
            )
        return out
    if name == "step":
        kv = _parse_kv(body, {"left": 0.2, "right": 0.8, "at": 0.5})
        return np.where(x < kv["at"], kv["left"], kv["right"])
    if name == "bump":
        kv = _parse_kv(body, {"base": 0.7, "amp": 0.25, "center": 0.5, "width": 0.15})
        r2 = (x - kv["center"]) ** 2
        if mesh.dim == 2:
            r2 = r2 + (mesh.centers[:, 1] - kv["center"]) ** 2
        return kv["base"] + kv["amp"] * np.exp(-r2 / kv["width"] ** 2)
    if name == "csv":
        data = np.loadtxt(body.strip(), delimiter=",", dtype=float).ravel()
        if data.size != mesh.ncells:
            raise ValueError(
                f"csv profile has {data.size} values, mesh has {mesh.ncells} cells"
            )
        return data
    raise ValueError(f"unknown density profile {name!r}")


def velocity_profile(spec: str, mesh: Mesh) -> np.ndarray:
    """Evaluate a named velocity profile at cell centers, shape (ncells, d)."""
    name, _, body = spec.partition(":")
    name = name.strip()
    out = np.zeros((mesh.ncells, mesh.dim))
    if name == "zero":
        return out
    if name == "sine":
        kv = _parse_kv(body, {"amp": 1.0, "k": 1.0, "l": 1.0, "axis": 0.0})
        axis = int(kv["axis"])
        x = mesh.centers[:, 0]
        if mesh.dim == 1:
            out[:, 0] = kv["amp"] * np.sin(np.pi * kv["k"] * x)
        else:
            y = mesh.centers[:, 1]
            out[:, axis] = (
                kv["amp"]
                * 2.0
                * np.sin(np.pi * kv["k"] * x)
                * np.sin(np.pi * kv["l"] * y)
            )
        return out
    if name == "uniform":
        kv = _parse_kv(body, {"ux": 0.0, "uy": 0.0})
        out[:, 0] = kv["ux"]
        if mesh.dim == 2:
            out[:, 1] = kv["uy"]
        return out
    raise ValueError(f"unknown velocity profile {name!r}")
