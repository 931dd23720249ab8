"""Immersed-boundary coupling between the fluid grid and body boundaries.

Two flavours of the no-slip interpolation are provided:

* classical: one row pair per boundary node, ``E[(i, a), f] = phi(dx) phi(dy)``;
* integral: one row pair per boundary segment, the kernel averaged along the
  straight segment with Gauss-Legendre quadrature (``Ebar``).

Both are written as ``Q @ E(points)`` where ``points`` are sample locations on
the bodies and ``Q`` averages them into constraint rows, so pose derivatives
share one code path. Rows are interleaved ``(x, y)`` per node or segment.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import CouplingError

SUPPORT = 1.5


def kernel_weight(r):
    """Roma et al. three-point smoothed delta (cell units)."""
    r = np.abs(np.asarray(r, float))
    out = np.zeros_like(r)
    inner = r <= 0.5
    outer = (r > 0.5) & (r < SUPPORT)
    out[inner] = (1.0 + np.sqrt(1.0 - 3.0 * r[inner] ** 2)) / 3.0
    a = 1.0 - r[outer]
    out[outer] = (5.0 - 3.0 * r[outer] - np.sqrt(np.maximum(1.0 - 3.0 * a**2, 0.0))) / 6.0
    return out


def kernel_derivative(r):
    r = np.asarray(r, float)
    s = np.sign(r)
    r = np.abs(r)
    out = np.zeros_like(r)
    inner = r <= 0.5
    outer = (r > 0.5) & (r < SUPPORT)
    out[inner] = -r[inner] / np.sqrt(1.0 - 3.0 * r[inner] ** 2)
    a = 1.0 - r[outer]
    out[outer] = -0.5 * (1.0 + a / np.sqrt(np.maximum(1.0 - 3.0 * a**2, 1e-300)))
    return s * out


def _lattice_weights(grid, points, with_gradient=False):
    """Kernel weights of every point against both face lattices.

    Returns COO triplets ``(row, col, w[, dw/dX, dw/dY])`` with row ``2*p + comp``.
    """
    points = np.asarray(points, float).reshape(-1, 2)
    n = len(points)
    cfg = grid.config
    x0, y0 = cfg.origin
    rows, cols, ws, gx, gy = [], [], [], [], []
    for comp in (0, 1):
        rx = (points[:, 0] - x0) / grid.dx - (0.0 if comp == 0 else 0.5)
        ry = (points[:, 1] - y0) / grid.dy - (0.5 if comp == 0 else 0.0)
        ci = np.rint(rx).astype(int)[:, None] + np.array([-1, 0, 1])
        cj = np.rint(ry).astype(int)[:, None] + np.array([-1, 0, 1])
        fx = rx[:, None] - ci
        fy = ry[:, None] - cj
        wx, wy = kernel_weight(fx), kernel_weight(fy)
        I = np.repeat(ci, 3, axis=1)
        J = np.tile(cj, (1, 3))
        W = np.repeat(wx, 3, axis=1) * np.tile(wy, (1, 3))
        ids = grid.u_id if comp == 0 else grid.v_id
        if cfg.periodic_x:
            I = I % grid.nx
        if cfg.periodic_y:
            J = J % grid.ny
        valid = (I >= 0) & (I < ids.shape[0]) & (J >= 0) & (J < ids.shape[1])
        if np.any(~valid & (W > 0)):
            bad = int(np.nonzero(np.any(~valid & (W > 0), axis=1))[0][0])
            raise CouplingError(
                f"kernel support of point {points[bad].tolist()} leaves the fluid domain"
            )
        keep = valid & (W > 0)
        pidx = np.broadcast_to(np.arange(n)[:, None], W.shape)[keep]
        rows.append(2 * pidx + comp)
        cols.append(ids[I[keep], J[keep]])
        ws.append(W[keep])
        if with_gradient:
            dwx = np.repeat(kernel_derivative(fx), 3, axis=1) * np.tile(wy, (1, 3))
            dwy = np.repeat(wx, 3, axis=1) * np.tile(kernel_derivative(fy), (1, 3))
            # d/dX of phi((X - x_f)/dx) = phi'/dx
            gx.append(dwx[keep] / grid.dx)
            gy.append(dwy[keep] / grid.dy)
    out = [np.concatenate(rows), np.concatenate(cols), np.concatenate(ws)]
    if with_gradient:
        out += [np.concatenate(gx), np.concatenate(gy)]
    return out


def build_E(grid, nodes):
    """Classical node interpolation matrix, rows interleaved ``(x, y)`` per node."""
    nodes = np.asarray(nodes, float).reshape(-1, 2)
    r, c, w = _lattice_weights(grid, nodes)
    return sp.csr_matrix((w, (r, c)), shape=(2 * len(nodes), grid.n_dofs))


def gauss_points(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _segment_samples(system, order):
    """Body index, body-frame sample points and averaging matrix for each segment."""
    xi, wq = gauss_points(order)
    seg = system.segments
    a = system.local_nodes[seg[:, 0]]
    b = system.local_nodes[seg[:, 1]]
    pts = (a[:, None, :] * (1.0 - xi)[None, :, None] + b[:, None, :] * xi[None, :, None]).reshape(-1, 2)
    body = np.repeat(system.segment_body, order)
    S = len(seg)
    Q = _averaging(S, order, wq)
    return body, pts, Q


def _averaging(n_rows, order, wq):
    """Interleaved (x, y) row averaging of ``order`` samples per row."""
    r = np.repeat(np.arange(n_rows), order)
    rr = np.concatenate([2 * r, 2 * r + 1])
    cc = np.concatenate([2 * np.arange(n_rows * order), 2 * np.arange(n_rows * order) + 1])
    dd = np.tile(np.tile(wq, n_rows), 2)
    return sp.csr_matrix((dd, (rr, cc)), shape=(2 * n_rows, 2 * n_rows * order))


def build_Ebar(grid, system, poses, order=3):
    """Integral-form interpolation matrix: one row pair per boundary segment."""
    return CouplingOperators(grid, system, poses, mode="integral", order=order).E


class CouplingOperators:
    """No-slip operators at one set of body poses.

    Attributes
    ----------
    E : sparse (n_rows, n_fluid)
        ``E`` (classical) or ``Ebar`` (integral) interpolation.
    Jb : sparse (n_rows, n_body)
        Body-velocity map paired with the rows of ``E``.
    """

    def __init__(self, grid, system, poses, mode="integral", order=3):
        if mode not in ("integral", "classical"):
            raise ValueError(f"unknown coupling mode {mode!r}")
        self.grid, self.system, self.mode, self.order = grid, system, mode, order
        self.poses = np.asarray(poses, float)
        if mode == "integral":
            body, local, Q = _segment_samples(system, order)
        else:
            body, local = system.node_body, system.local_nodes
            Q = sp.identity(2 * len(body), format="csr")
        self._body, self._local, self.Q = body, local, Q
        world = system.world_points(self.poses, body, local) if len(body) else np.zeros((0, 2))
        self.sample_points = world
        self._arm = world - self.poses.reshape(-1, 3)[body, :2] if len(body) else world
        r, c, w, gx, gy = _lattice_weights(grid, world, with_gradient=True)
        shape = (2 * len(world), grid.n_dofs)
        self._Ep = sp.csr_matrix((w, (r, c)), shape=shape)
        self._DX = sp.csr_matrix((gx, (r, c)), shape=shape)
        self._DY = sp.csr_matrix((gy, (r, c)), shape=shape)
        self.E = (Q @ self._Ep).tocsr()
        self.Jb = (Q @ system.point_velocity_jacobian(self.poses, body, local)).tocsr()
        self.n_rows = self.E.shape[0]

    # d/dq of (E v): per sample row, the kernel gradient contracted with v,
    # chained through X = p + R(theta) r.
    def _sample_body_matrix(self, gx, gy):
        """Scatter per-row X/Y sensitivities into pose columns (rows = sample rows)."""
        n = len(self._body)
        rows = np.arange(2 * n)
        body = np.repeat(self._body, 2)
        arm = np.repeat(self._arm, 2, axis=0)
        th = gx * (-arm[:, 1]) + gy * arm[:, 0]
        rr = np.concatenate([rows, rows, rows])
        cc = np.concatenate([3 * body, 3 * body + 1, 3 * body + 2])
        return sp.csr_matrix(
            (np.concatenate([gx, gy, th]), (rr, cc)), shape=(2 * n, self.system.n_dofs)
        )

    def fluid_pose_derivative(self, v_fluid):
        """d(E(q) v)/dq, shape ``(n_rows, n_body)``."""
        return (self.Q @ self._sample_body_matrix(self._DX @ v_fluid, self._DY @ v_fluid)).tocsr()

    def adjoint_pose_derivative(self, lam):
        """d(E(q).T lam)/dq, shape ``(n_fluid, n_body)``."""
        lq = self.Q.T @ lam
        n = len(self._body)
        body = np.repeat(self._body, 2)
        arm = np.repeat(self._arm, 2, axis=0)
        rows = np.arange(2 * n)
        shape = (2 * n, self.system.n_dofs)
        Sx = sp.csr_matrix((lq, (rows, 3 * body)), shape=shape)
        Sy = sp.csr_matrix((lq, (rows, 3 * body + 1)), shape=shape)
        Sx = Sx + sp.csr_matrix((-lq * arm[:, 1], (rows, 3 * body + 2)), shape=shape)
        Sy = Sy + sp.csr_matrix((lq * arm[:, 0], (rows, 3 * body + 2)), shape=shape)
        return (self._DX.T @ Sx + self._DY.T @ Sy).tocsr()

    def body_velocity_pose_derivative(self, vels):
        """d(Jb(q) vels)/dq."""
        return (self.Q @ self.system.point_velocity_pose_derivative(
            self.poses, self._body, self._local, vels)).tocsr()

    def body_force_pose_derivative(self, lam):
        """d(Jb(q).T lam)/dq."""
        return self.system.point_force_pose_derivative(
            self.poses, self._body, self._local, self.Q.T @ lam)

    def pose_gradient(self, v_fluid, lam):
        """Gradient of ``(E(q) v).T lam`` with respect to the stacked poses."""
        return self.fluid_pose_derivative(v_fluid).T @ lam


def ebar_pose_derivative(grid, system, poses, v_fluid, lam, order=3):
    return CouplingOperators(grid, system, poses, "integral", order).pose_gradient(v_fluid, lam)


def body_force_from_duals(operators, lam, h):
    """Force and torque on each body, shape ``(n_bodies, 3)``.

    ``lam`` are no-slip impulses over a step of length ``h``; the result is the
    force exerted by the fluid on the body.
    """
    return (operators.Jb.T @ lam / h).reshape(-1, 3)


def fluid_force_from_duals(operators, lam, h):
    """Net ``(Fx, Fy)`` that the boundary exerts on the fluid."""
    f = -(operators.E.T @ lam) / h
    g = operators.grid
    return np.array([f[: g.n_u].sum(), f[g.n_u :].sum()])
