"""Galerkin momentum balance on interior sine modes.

The velocity is u = uB_ext + sum_i v_i w_i with L2-orthonormal modes w_i
that vanish on the boundary, so the trace of u is the boundary data by
construction.  One backward-Euler step enforces, for every test mode w_j,

    (1/dt) [ <rho+ u+ . w_j> - <rho u . w_j> ]
        = <rho+ u* x u* : grad w_j> + <pi(rho+) div w_j>
          - <S_app : D w_j> - eps <(grad rho+ . grad) u+ . w_j>,

with the stress linearized by one Newton step around the current Picard
iterate u*: S_app = S(D*) + DS(D*)[D+ - D*].  The inertia is kept in the
conservative form d/dt <rho u . w_j>, split into the coefficient part
(mass matrices) and the boundary-extension part <(rho+ - rho) uB . w_j>;
this is the form whose kinetic telescoping matches the energy ledger.

Convection and pressure are explicit in u*, viscosity and the drift
correction are implicit, and the continuity coupling is a Picard loop per
time step that the caller restarts with a halved dt when it stalls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potential import stress_field, stress_tangent_coeffs
from .tensors import field_deviator, field_norm, field_trace, ncomp


class SingularMassMatrix(Exception):
    """Mass matrix not invertible (density vanished on a mode's support)."""


class NewtonDivergence(Exception):
    """Stress linearization produced non-finite coefficients."""


class FixedPointStall(Exception):
    """Picard coupling failed to contract within the iteration budget."""


def sine_mode_list(dim: int, n: int):
    """Index tuples of the first n interior sine modes.

    1D: wavenumbers (k,).  2D: (k, l, c) with component c, ordered by
    (k^2 + l^2, c, k, l) so the list is deterministic and frequency-sorted.
    """
    if dim == 1:
        return [(k,) for k in range(1, n + 1)]
    cand = []
    kmax = max(2, int(np.ceil(np.sqrt(n))) + 2)
    for k in range(1, kmax + 2):
        for l in range(1, kmax + 2):
            for c in (0, 1):
                cand.append((k, l, c))
    cand.sort(key=lambda t: (t[0] ** 2 + t[1] ** 2, t[2], t[0], t[1]))
    return cand[:n]


class GalerkinBasis:
    """Interior sine modes with per-cell Gauss-Legendre quadrature tables."""

    def __init__(self, mesh, n: int, nq: int | None = None):
        if n < 1:
            raise ValueError("need at least one mode")
        self.mesh = mesh
        self.dim = mesh.dim
        self.n = int(n)
        self.ncomp = ncomp(self.dim)
        self.modes = sine_mode_list(self.dim, self.n)
        self.met = np.array([1.0] * self.dim + [2.0] * (self.ncomp - self.dim))
        if nq is None:
            nq = 8 if self.dim == 1 else 5
        self._build_quadrature(nq)
        self.val = self.mode_values(self.xq)
        self.grad = self.mode_grads(self.xq)
        self.sym = self._sym_from_grad(self.grad)
        self.dev = field_deviator(self.sym, self.dim)
        self.div = np.einsum("qiaa->qi", self.grad)
        self.dev_m = self.dev * self.met
        self.sym_m = self.sym * self.met
        self._build_face_tables()

    def _build_quadrature(self, nq):
        mesh = self.mesh
        xi, om = np.polynomial.legendre.leggauss(nq)
        if self.dim == 1:
            (nx,) = mesh.shape
            h = mesh.h[0]
            cells = np.arange(nx)
            x = (cells[:, None] + 0.5 * (xi[None, :] + 1.0)) * h
            self.xq = x.reshape(-1, 1)
            self.wq = np.tile(om * h / 2.0, nx)
            self.cellq = np.repeat(cells, nq)
        else:
            nx, ny = mesh.shape
            hx, hy = mesh.h
            gx = (np.arange(nx)[:, None] + 0.5 * (xi[None, :] + 1.0)) * hx
            gy = (np.arange(ny)[:, None] + 0.5 * (xi[None, :] + 1.0)) * hy
            pts = []
            ws = []
            cid = []
            wxy = np.outer(om, om).ravel() * hx * hy / 4.0
            for ix in range(nx):
                for iy in range(ny):
                    xs, ys = np.meshgrid(gx[ix], gy[iy], indexing="ij")
                    pts.append(np.column_stack([xs.ravel(), ys.ravel()]))
                    ws.append(wxy)
                    cid.append(np.full(nq * nq, ix * ny + iy))
            self.xq = np.concatenate(pts)
            self.wq = np.concatenate(ws)
            self.cellq = np.concatenate(cid)
        self.nquad = self.xq.shape[0]

    def mode_values(self, points):
        """Mode velocity values, shape (P, n, dim)."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros((pts.shape[0], self.n, self.dim))
        if self.dim == 1:
            x = pts[:, 0]
            for i, (k,) in enumerate(self.modes):
                out[:, i, 0] = np.sqrt(2.0) * np.sin(k * np.pi * x)
            return out
        x, y = pts[:, 0], pts[:, 1]
        for i, (k, l, c) in enumerate(self.modes):
            out[:, i, c] = 2.0 * np.sin(k * np.pi * x) * np.sin(l * np.pi * y)
        return out

    def mode_grads(self, points):
        """Mode gradients grad[p, i, a, b] = d w_{i,b} / d x_a."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros((pts.shape[0], self.n, self.dim, self.dim))
        if self.dim == 1:
            x = pts[:, 0]
            for i, (k,) in enumerate(self.modes):
                out[:, i, 0, 0] = np.sqrt(2.0) * k * np.pi * np.cos(k * np.pi * x)
            return out
        x, y = pts[:, 0], pts[:, 1]
        for i, (k, l, c) in enumerate(self.modes):
            sx, cx = np.sin(k * np.pi * x), np.cos(k * np.pi * x)
            sy, cy = np.sin(l * np.pi * y), np.cos(l * np.pi * y)
            out[:, i, 0, c] = 2.0 * k * np.pi * cx * sy
            out[:, i, 1, c] = 2.0 * l * np.pi * sx * cy
        return out

    def _sym_from_grad(self, grad):
        q, n = grad.shape[:2]
        sym = np.empty((q, n, self.ncomp))
        if self.dim == 1:
            sym[..., 0] = grad[..., 0, 0]
            return sym
        sym[..., 0] = grad[..., 0, 0]
        sym[..., 1] = grad[..., 1, 1]
        sym[..., 2] = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
        return sym

    def _build_face_tables(self):
        """Normal mode values at face centers, per axis, grid-shaped."""
        mesh = self.mesh
        self.face_modes = []
        for axis in range(self.dim):
            pts = mesh.face_centers(axis)
            vals = self.mode_values(pts)[:, :, axis]
            if self.dim == 1:
                self.face_modes.append(vals)  # (N+1, n)
            else:
                nx, ny = mesh.shape
                shape = (nx + 1, ny) if axis == 0 else (nx, ny + 1)
                self.face_modes.append(vals.reshape(shape + (self.n,)))

    def gram_matrix(self):
        return np.einsum("q,qid,qjd->ij", self.wq, self.val, self.val)

    def gram_error(self):
        return float(np.max(np.abs(self.gram_matrix() - np.eye(self.n))))

    def project(self, values_at_quad):
        """L2 projection coefficients of a velocity sampled at quadrature."""
        return np.einsum("q,qid,qd->i", self.wq, self.val, values_at_quad)

    def eval_velocity(self, points, coeffs):
        return np.einsum("pid,i->pd", self.mode_values(points), coeffs)


@dataclass
class MomentumStepData:
    """Quadrature-level state the energy ledger needs from one step."""

    mass_old: np.ndarray    # M(rho_old)
    mass_new: np.ndarray    # M(rho_new)
    stress_q: np.ndarray    # S_app at quadrature points, packed
    strain_new_q: np.ndarray  # D(u+) packed
    pi_q: np.ndarray
    ustar_q: np.ndarray
    rho_old_q: np.ndarray
    rho_new_q: np.ndarray


class MomentumSolver:
    """Semi-implicit Galerkin step for the velocity coefficients."""

    def __init__(self, mesh, basis: GalerkinBasis, potential, pressure, bd, eps):
        self.mesh = mesh
        self.basis = basis
        self.potential = potential
        self.pressure = pressure
        self.bd = bd
        self.eps = float(eps)
        ext = bd.extension
        xq = basis.xq
        self.uB_q = ext.value(xq)
        self.graduB_q = ext.grad(xq)
        self.divuB_q = ext.div(xq)
        self.DuB_q = self._sym_of(self.graduB_q)
        # grad(|uB|^2 / 2)_a = uB_b d_a uB_b
        self.grad_half_uB2_q = np.einsum("qab,qb->qa", self.graduB_q, self.uB_q)
        self.uB_faces = []
        for axis in range(mesh.dim):
            vals = ext.value(mesh.face_centers(axis))[:, axis]
            if mesh.dim == 1:
                self.uB_faces.append(vals)
            else:
                nx, ny = mesh.shape
                shape = (nx + 1, ny) if axis == 0 else (nx, ny + 1)
                self.uB_faces.append(vals.reshape(shape))

    def _sym_of(self, grad):
        dim = self.mesh.dim
        sym = np.empty(grad.shape[:-2] + (ncomp(dim),))
        sym[..., 0] = grad[..., 0, 0]
        if dim == 2:
            sym[..., 1] = grad[..., 1, 1]
            sym[..., 2] = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
        return sym

    def face_velocities(self, v):
        """Face-normal velocities of uB_ext + modes, per axis, grid-shaped."""
        out = []
        for axis in range(self.mesh.dim):
            out.append(self.uB_faces[axis] + self.basis.face_modes[axis] @ v)
        return out

    def grad_rho_cells(self, rho):
        """Cellwise central density gradient, one-sided at the boundary."""
        mesh = self.mesh
        if mesh.dim == 1:
            h = mesh.h[0]
            g = np.empty((mesh.ncells, 1))
            g[1:-1, 0] = (rho[2:] - rho[:-2]) / (2.0 * h)
            g[0, 0] = (rho[1] - rho[0]) / h
            g[-1, 0] = (rho[-1] - rho[-2]) / h
            return g
        nx, ny = mesh.shape
        hx, hy = mesh.h
        r = rho.reshape(nx, ny)
        g = np.empty((nx, ny, 2))
        g[1:-1, :, 0] = (r[2:, :] - r[:-2, :]) / (2.0 * hx)
        g[0, :, 0] = (r[1, :] - r[0, :]) / hx
        g[-1, :, 0] = (r[-1, :] - r[-2, :]) / hx
        g[:, 1:-1, 1] = (r[:, 2:] - r[:, :-2]) / (2.0 * hy)
        g[:, 0, 1] = (r[:, 1] - r[:, 0]) / hy
        g[:, -1, 1] = (r[:, -1] - r[:, -2]) / hy
        return g.reshape(mesh.ncells, 2)

    def strain_state(self, v):
        """Packed D(u) at quadrature for u = uB_ext + modes . v."""
        return self.DuB_q + np.einsum("qic,i->qc", self.basis.sym, v)

    def mass_matrix(self, rho):
        b = self.basis
        return np.einsum("q,qid,qjd->ij", b.wq * rho[b.cellq], b.val, b.val)

    def initial_coefficients(self, u0_cells):
        """Project u0 - uB_ext onto the mode span."""
        b = self.basis
        diff = u0_cells[b.cellq] - self.uB_q
        return b.project(diff)

    def step(self, rho_new, rho_old, v_old, v_star, dt):
        b = self.basis
        dim = self.mesh.dim
        pot = self.potential
        rho_q_new = rho_new[b.cellq]
        rho_q_old = rho_old[b.cellq]

        mass_new = np.einsum("q,qid,qjd->ij", b.wq * rho_q_new, b.val, b.val)
        mass_old = np.einsum("q,qid,qjd->ij", b.wq * rho_q_old, b.val, b.val)
        if np.any(np.diag(mass_new) <= 0.0):
            raise SingularMassMatrix("a mode carries no mass")

        # current iterate state
        ustar_q = self.uB_q + np.einsum("qid,i->qd", b.val, v_star)
        d_star = self.strain_state(v_star)
        dev_star = field_deviator(d_star, dim)
        r_star = field_norm(dev_star, dim)
        tr_star = field_trace(d_star, dim)
        s_star = stress_field(pot, r_star, tr_star, dev_star, dim)
        a_c, b_c, c_c = stress_tangent_coeffs(pot, r_star, tr_star)
        if not (
            np.all(np.isfinite(s_star))
            and np.all(np.isfinite(a_c))
            and np.all(np.isfinite(b_c))
            and np.all(np.isfinite(c_c))
        ):
            raise NewtonDivergence("stress linearization is not finite")
        # unit deviatoric direction, metric-weighted for contractions
        nhat = np.zeros_like(dev_star)
        rmask = r_star > 1e-14
        nhat[rmask] = dev_star[rmask] / r_star[rmask, None]
        nhat_m = nhat * b.met

        # viscous tangent V_ij = <DS[D(w_i)] : D(w_j)>
        wb = b.wq * b_c
        v_lin = np.einsum("q,qic,qjc->ij", wb, b.dev_m, b.dev)
        proj = np.einsum("qc,qic->qi", nhat_m, b.dev)
        v_lin += np.einsum("q,qi,qj->ij", b.wq * a_c, proj, proj)
        v_lin += np.einsum("q,qi,qj->ij", b.wq * c_c, b.div, b.div)

        # implicit drift correction  -eps <(grad rho . grad) u, w_j>
        gr_q = self.grad_rho_cells(rho_new)[b.cellq]
        drift = np.einsum("qa,qiab->qib", gr_q, b.grad)
        e_lin = self.eps * np.einsum("q,qib,qjb->ij", b.wq, drift, b.val)

        pi_q = self.pressure.pressure(rho_q_new)
        conv = np.einsum("q,qa,qb,qjab->j", b.wq * rho_q_new, ustar_q, ustar_q, b.grad)
        pres = np.einsum("q,qj->j", b.wq * pi_q, b.div)
        f_star = np.einsum("q,qc,qjc->j", b.wq, s_star * b.met, b.sym)
        drift_ub = np.einsum("qa,qab->qb", gr_q, self.graduB_q)
        eps_ub = self.eps * np.einsum("q,qb,qjb->j", b.wq, drift_ub, b.val)
        drho_ub = np.einsum(
            "q,qd,qjd->j", b.wq * (rho_q_new - rho_q_old), self.uB_q, b.val
        )

        lhs = mass_new / dt + v_lin + e_lin
        rhs = (
            mass_old @ v_old / dt
            - drho_ub / dt
            + conv
            + pres
            - f_star
            + v_lin @ v_star
            - eps_ub
        )
        try:
            v_new = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMassMatrix(str(exc)) from exc
        if not np.all(np.isfinite(v_new)):
            raise NewtonDivergence("momentum solve produced non-finite state")

        # stress actually applied, consistent with the linear system
        d_new = self.strain_state(v_new)
        delta = d_new - d_star
        e0 = field_deviator(delta, dim)
        tr_delta = field_trace(delta, dim)
        s_app = s_star + b_c[:, None] * e0
        pn = np.einsum("qc,qc->q", nhat_m, e0)
        s_app = s_app + (a_c * pn)[:, None] * nhat
        s_app[:, :dim] += (c_c * tr_delta)[:, None]

        data = MomentumStepData(
            mass_old=mass_old,
            mass_new=mass_new,
            stress_q=s_app,
            strain_new_q=d_new,
            pi_q=pi_q,
            ustar_q=ustar_q,
            rho_old_q=rho_q_old,
            rho_new_q=rho_q_new,
        )
        return v_new, data


def fixed_point_coupler(
    cont_solver,
    mom_solver: MomentumSolver,
    rho_old,
    v_old,
    dt,
    tol: float = 1e-10,
    max_iter: int = 25,
):
    """Alternate continuity and momentum solves until the velocity settles.

    Returns (continuity report, v_new, momentum data, iterations, face_vel).
    With cont_solver None the density is frozen and only the momentum map is
    iterated.
    """
    v_star = np.array(v_old, dtype=float, copy=True)
    report = None
    for it in range(1, max_iter + 1):
        if cont_solver is not None:
            face_vel = mom_solver.face_velocities(v_star)
            report = cont_solver.step(rho_old, face_vel, dt)
            rho_new = report.rho_new
        else:
            face_vel = None
            rho_new = rho_old
        v_new, data = mom_solver.step(rho_new, rho_old, v_old, v_star, dt)
        if np.linalg.norm(v_new - v_star) <= tol * (1.0 + np.linalg.norm(v_star)):
            return report, v_new, data, it, face_vel
        v_star = v_new
    raise FixedPointStall(
        f"no contraction after {max_iter} Picard iterations at dt={dt:.3e}"
    )


# ---------------------------------------------------------------------------
# thin state wrapper and one-call entry points


@dataclass
class VelocityState:
    """Galerkin coefficients v with the basis and boundary lift they refer to.

    The physical velocity is u = sum_i v_i w_i + uB_ext, so the trace of u on
    the boundary equals uB exactly (every mode vanishes there).
    """

    v: np.ndarray
    basis: GalerkinBasis
    bd: object
    t: float = 0.0

    def velocity_at(self, points) -> np.ndarray:
        return self.basis.eval_velocity(points, self.v) + self.bd.extension.value(
            points
        )


def project_Pn(basis: GalerkinBasis, values_at_quad) -> np.ndarray:
    """L2 projection onto the mode span; idempotent on coefficients."""
    return basis.project(values_at_quad)


def momentum_step(
    rho,
    vel: VelocityState,
    pot,
    pressure,
    bd,
    eps: float,
    dt: float,
) -> VelocityState:
    """Advance a VelocityState one semi-implicit step with frozen density.

    rho may be a DensityField or a plain cell array; the density is used on
    both time levels, so this entry point serves frozen-density stepping and
    single Picard passes.  The time loop keeps a MomentumSolver instead.
    """
    rho_arr = getattr(rho, "rho", rho)
    solver = MomentumSolver(bd.mesh, vel.basis, pot, pressure, bd, eps)
    v_new, _ = solver.step(rho_arr, rho_arr, vel.v, vel.v, dt)
    return VelocityState(v=v_new, basis=vel.basis, bd=vel.bd, t=vel.t + dt)
