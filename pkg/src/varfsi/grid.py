"""Staggered (MAC) finite-volume grid for 2D incompressible flow.

Pressure lives at cell centres, ``u`` on vertical faces and ``v`` on
horizontal faces. Every operator is volume-integrated (scaled by ``dx*dy``)
so the momentum balance can be assembled term by term:

    Mf v      ~ int rho v dV
    N(v)      ~ int (v . grad) v dV          (skew-symmetric form)
    G p       ~ -int grad p dV               (so that divergence == G.T)
    L v + l   ~ int laplacian(v) dV

Boundary treatment
------------------
Velocity components normal to a wall/inflow side are unknowns pinned by the
selection matrix ``B``. Tangential components never sit on the boundary and
are handled with mirrored ghosts (``ghost = 2*U_side - interior``). Outflow
sides use zero-normal-gradient ghosts and contribute no ``B`` rows; the
pressure outside an outflow side is zero. Periodic sides identify the last
face column/row with the first.

Ghost values are affine in the unknowns; their constant parts are linear in a
``(4, 2)`` table of side velocities so that time-dependent inflow can be
applied without rebuilding the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DimensionError

SIDES = ("left", "right", "bottom", "top")
LEFT, RIGHT, BOTTOM, TOP = range(4)
_KINDS = ("wall", "periodic", "inflow", "outflow")


@dataclass(frozen=True)
class BoundarySpec:
    kind: str = "wall"
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown boundary kind {self.kind!r}")
        if self.kind != "inflow" and any(c != 0.0 for c in self.velocity):
            raise ConfigurationError(f"{self.kind} boundary cannot carry a velocity")

    @classmethod
    def wall(cls):
        return cls("wall")

    @classmethod
    def periodic(cls):
        return cls("periodic")

    @classmethod
    def inflow(cls, u, v=0.0):
        return cls("inflow", (float(u), float(v)))

    @classmethod
    def outflow(cls):
        return cls("outflow")


@dataclass(frozen=True)
class GridConfig:
    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)
    left: BoundarySpec = field(default_factory=BoundarySpec.wall)
    right: BoundarySpec = field(default_factory=BoundarySpec.wall)
    bottom: BoundarySpec = field(default_factory=BoundarySpec.wall)
    top: BoundarySpec = field(default_factory=BoundarySpec.wall)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigurationError("cell counts must be integers")
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError(f"need at least 2x2 cells, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise ConfigurationError("cell sizes must be positive")
        if (self.left.kind == "periodic") != (self.right.kind == "periodic"):
            raise ConfigurationError("periodic left/right sides must come in a pair")
        if (self.bottom.kind == "periodic") != (self.top.kind == "periodic"):
            raise ConfigurationError("periodic bottom/top sides must come in a pair")

    @property
    def sides(self):
        return (self.left, self.right, self.bottom, self.top)

    @property
    def periodic_x(self):
        return self.left.kind == "periodic"

    @property
    def periodic_y(self):
        return self.bottom.kind == "periodic"

    @property
    def extent(self):
        return (self.nx * self.dx, self.ny * self.dy)


@dataclass(frozen=True)
class FluidProperties:
    rho: float = 1.0
    mu: float = 0.0
    g: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError("density must be positive")
        if self.mu < 0:
            raise ConfigurationError("viscosity must be non-negative")


@dataclass
class FluidState:
    """Face velocities and cell pressures at one midpoint time."""

    v: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.p))):
            raise ValueError("fluid state has non-finite entries")


class _Refs:
    """Affine references ``w * x[idx] + cf * table[side, comp]`` to face values."""

    __slots__ = ("idx", "w", "side", "cf", "comp")

    def __init__(self, idx, w, side, cf, comp):
        self.idx, self.w, self.side, self.cf, self.comp = idx, w, side, cf, comp

    def const(self, table):
        side = np.where(self.side < 0, 0, self.side)
        return np.where(self.side < 0, 0.0, self.cf * table[side, self.comp])

    def value(self, x, table):
        return self.w * x[self.idx] + self.const(table)


class FluidGrid:
    """Grid geometry, DOF numbering and assembled operators.

    Immutable after construction. ``u`` DOFs come first, then ``v`` DOFs.
    """

    def __init__(self, config: GridConfig, props: FluidProperties):
        self.config = config
        self.props = props
        c = config
        nx, ny = c.nx, c.ny
        self.nx, self.ny, self.dx, self.dy = nx, ny, c.dx, c.dy
        self.cell_volume = c.dx * c.dy
        x0, y0 = c.origin

        # face columns/rows carrying distinct DOFs
        self.nux = nx if c.periodic_x else nx + 1
        self.nvy = ny if c.periodic_y else ny + 1
        self.n_u = self.nux * ny
        self.n_v = nx * self.nvy
        self.n_dofs = self.n_u + self.n_v
        self.n_cells = nx * ny

        # u_id[i, j] for i in 0..nx, v_id[i, j] for j in 0..ny (periodic copies alias)
        u_id = np.arange(self.n_u).reshape(ny, self.nux).T
        if c.periodic_x:
            u_id = np.vstack([u_id, u_id[:1]])
        v_id = self.n_u + np.arange(self.n_v).reshape(self.nvy, nx).T
        if c.periodic_y:
            v_id = np.hstack([v_id, v_id[:, :1]])
        self.u_id, self.v_id = u_id, v_id

        iu, ju = np.meshgrid(np.arange(self.nux), np.arange(ny), indexing="xy")
        iu, ju = iu.ravel(), ju.ravel()
        iv, jv = np.meshgrid(np.arange(nx), np.arange(self.nvy), indexing="xy")
        iv, jv = iv.ravel(), jv.ravel()
        self._u_ij = (iu, ju)
        self._v_ij = (iv, jv)
        pos = np.empty((self.n_dofs, 2))
        pos[: self.n_u, 0] = x0 + iu * c.dx
        pos[: self.n_u, 1] = y0 + (ju + 0.5) * c.dy
        pos[self.n_u :, 0] = x0 + (iv + 0.5) * c.dx
        pos[self.n_u :, 1] = y0 + jv * c.dy
        self.face_positions = pos
        self.component = np.r_[np.zeros(self.n_u, int), np.ones(self.n_v, int)]

        ic, jc = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        self._cell_ij = (ic.ravel(), jc.ravel())
        self.cell_centers = np.column_stack(
            [x0 + (ic.ravel() + 0.5) * c.dx, y0 + (jc.ravel() + 0.5) * c.dy]
        )

        self.default_bc_table = np.array([s.velocity for s in c.sides], float)
        self.has_outflow = any(s.kind == "outflow" for s in c.sides)

        self.Mf = sp.identity(self.n_dofs, format="csr") * (props.rho * self.cell_volume)
        self.D = self._assemble_divergence()
        self.G = self._assemble_gradient()
        self._assemble_laplacian()
        self._assemble_convection()
        self._assemble_boundary()
        self._assemble_vorticity()

    # ------------------------------------------------------------------ refs
    def _kind(self, side):
        return self.config.sides[side].kind

    def _ref_u(self, i, j):
        """Resolve u(i, j) for integer arrays that may step one past the grid."""
        nx, ny = self.nx, self.ny
        i = np.asarray(i).copy()
        j = np.asarray(j).copy()
        w = np.ones(i.shape)
        side = np.full(i.shape, -1)
        cf = np.zeros(i.shape)
        if self.config.periodic_x:
            i %= nx
        else:
            i = np.clip(i, 0, nx)  # zero normal gradient
        if self.config.periodic_y:
            j %= ny
        else:
            for s, mask, jm in ((BOTTOM, j < 0, 0), (TOP, j >= ny, ny - 1)):
                if not mask.any():
                    continue
                j[mask] = jm
                if self._kind(s) != "outflow":
                    w[mask] = -1.0
                    side[mask] = s
                    cf[mask] = 2.0
        return _Refs(self.u_id[i, j], w, side, cf, 0)

    def _ref_v(self, i, j):
        nx, ny = self.nx, self.ny
        i = np.asarray(i).copy()
        j = np.asarray(j).copy()
        w = np.ones(i.shape)
        side = np.full(i.shape, -1)
        cf = np.zeros(i.shape)
        if self.config.periodic_y:
            j %= ny
        else:
            j = np.clip(j, 0, ny)
        if self.config.periodic_x:
            i %= nx
        else:
            for s, mask, im in ((LEFT, i < 0, 0), (RIGHT, i >= nx, nx - 1)):
                if not mask.any():
                    continue
                i[mask] = im
                if self._kind(s) != "outflow":
                    w[mask] = -1.0
                    side[mask] = s
                    cf[mask] = 2.0
        return _Refs(self.v_id[i, j], w, side, cf, 1)

    # ------------------------------------------------------------- assembly
    def _assemble_divergence(self):
        ic, jc = self._cell_ij
        cell = np.arange(self.n_cells)
        dx, dy = self.dx, self.dy
        rows = np.tile(cell, 4)
        cols = np.concatenate(
            [self.u_id[ic + 1, jc], self.u_id[ic, jc], self.v_id[ic, jc + 1], self.v_id[ic, jc]]
        )
        data = np.repeat([dy, -dy, dx, -dx], self.n_cells)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_cells, self.n_dofs))

    def _assemble_gradient(self):
        # built face by face so that G.T == D is a genuine check
        nx, ny = self.nx, self.ny
        rows, cols, data = [], [], []
        iu, ju = self._u_ij
        for di, sign in ((-1, 1.0), (0, -1.0)):
            ci = iu + di
            if self.config.periodic_x:
                ci = ci % nx
            ok = (ci >= 0) & (ci < nx)
            rows.append(self.u_id[iu[ok], ju[ok]])
            cols.append(ju[ok] * nx + ci[ok])
            data.append(np.full(ok.sum(), sign * self.dy))
        iv, jv = self._v_ij
        for dj, sign in ((-1, 1.0), (0, -1.0)):
            cj = jv + dj
            if self.config.periodic_y:
                cj = cj % ny
            ok = (cj >= 0) & (cj < ny)
            rows.append(self.v_id[iv[ok], jv[ok]])
            cols.append(cj[ok] * nx + iv[ok])
            data.append(np.full(ok.sum(), sign * self.dx))
        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_dofs, self.n_cells),
        )

    def _neighbors(self):
        """Neighbour refs of every DOF, order E, W, N, S, plus their weights."""
        iu, ju = self._u_ij
        iv, jv = self._v_ij
        out = []
        for (di, dj) in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ru = self._ref_u(iu + di, ju + dj)
            rv = self._ref_v(iv + di, jv + dj)
            out.append(_concat(ru, rv))
        return out

    def _assemble_laplacian(self):
        vol = self.cell_volume
        coefs = (vol / self.dx**2,) * 2 + (vol / self.dy**2,) * 2
        a = np.arange(self.n_dofs)
        rows, cols, data = [], [], []
        bc_rows, bc_cols, bc_data = [], [], []
        for ref, k in zip(self._neighbors(), coefs):
            rows += [a, a]
            cols += [ref.idx, a]
            data += [k * ref.w, np.full(self.n_dofs, -k)]
            m = ref.side >= 0
            bc_rows.append(a[m])
            bc_cols.append(ref.side[m] * 2 + ref.comp[m])
            bc_data.append(k * ref.cf[m])
        self.L = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_dofs, self.n_dofs),
        )
        self.L.eliminate_zeros()
        # maps the flattened (4, 2) side-velocity table to the affine part
        self._L_bc = sp.csr_matrix(
            (np.concatenate(bc_data), (np.concatenate(bc_rows), np.concatenate(bc_cols))),
            shape=(self.n_dofs, 8),
        )

    def _assemble_convection(self):
        iu, ju = self._u_ij
        iv, jv = self._v_ij
        dx, dy = self.dx, self.dy
        nb = self._neighbors()
        # advecting flux through each control-volume face, outward, E W N S
        fl = [
            (_concat(self._ref_u(iu, ju), self._ref_u(iv + 1, jv - 1)),
             _concat(self._ref_u(iu + 1, ju), self._ref_u(iv + 1, jv)), 0.5 * dy),
            (_concat(self._ref_u(iu - 1, ju), self._ref_u(iv, jv - 1)),
             _concat(self._ref_u(iu, ju), self._ref_u(iv, jv)), -0.5 * dy),
            (_concat(self._ref_v(iu - 1, ju + 1), self._ref_v(iv, jv)),
             _concat(self._ref_v(iu, ju + 1), self._ref_v(iv, jv + 1)), 0.5 * dx),
            (_concat(self._ref_v(iu - 1, ju), self._ref_v(iv, jv - 1)),
             _concat(self._ref_v(iu, ju), self._ref_v(iv, jv)), -0.5 * dx),
        ]
        self._conv = [(f1, f2, alpha, n) for (f1, f2, alpha), n in zip(fl, nb)]

    def _assemble_boundary(self):
        c = self.config
        nx, ny = self.nx, self.ny
        idx, side, comp = [], [], []
        j = np.arange(ny)
        i = np.arange(nx)
        for s, ids, cp in (
            (LEFT, self.u_id[0, j], 0),
            (RIGHT, self.u_id[nx, j], 0),
            (BOTTOM, self.v_id[i, 0], 1),
            (TOP, self.v_id[i, ny], 1),
        ):
            if c.sides[s].kind in ("wall", "inflow"):
                idx.append(ids)
                side.append(np.full(ids.size, s))
                comp.append(np.full(ids.size, cp))
        if idx:
            idx, side, comp = map(np.concatenate, (idx, side, comp))
        else:
            idx = side = comp = np.zeros(0, int)
        self.bc_dofs = idx
        self._bc_side, self._bc_comp = side, comp
        self.B = sp.csr_matrix(
            (np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, self.n_dofs)
        )

    def _assemble_vorticity(self):
        nx, ny = self.nx, self.ny
        iN, jN = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
        iN, jN = iN.ravel(), jN.ravel()
        n = iN.size
        terms = (
            (self._ref_v(iN, jN), 1.0 / self.dx),
            (self._ref_v(iN - 1, jN), -1.0 / self.dx),
            (self._ref_u(iN, jN), -1.0 / self.dy),
            (self._ref_u(iN, jN - 1), 1.0 / self.dy),
        )
        rows = np.tile(np.arange(n), 4)
        self._vort = sp.csr_matrix(
            (np.concatenate([r.w * k for r, k in terms]),
             (rows, np.concatenate([r.idx for r, _ in terms]))),
            shape=(n, self.n_dofs),
        )
        self._vort_terms = [(r.side, r.cf, r.comp, k) for r, k in terms]
        self.node_positions = np.column_stack(
            [self.config.origin[0] + iN * self.dx, self.config.origin[1] + jN * self.dy]
        )

    # -------------------------------------------------------------- helpers
    def _check(self, x, n, what="velocity"):
        x = np.asarray(x, dtype=float)
        if x.shape != (n,):
            raise DimensionError(f"{what} vector has shape {x.shape}, expected ({n},)")
        return x

    def _table(self, bc_table):
        return self.default_bc_table if bc_table is None else np.asarray(bc_table, float)

    @property
    def needs_gauge(self):
        """Pressure is only fixed up to a constant when nothing flows out."""
        return not self.has_outflow

    def split(self, v):
        """Return ``(u, v)`` as 2D arrays indexed ``[i, j]``."""
        v = self._check(v, self.n_dofs)
        return (v[: self.n_u].reshape(self.ny, self.nux).T,
                v[self.n_u :].reshape(self.nvy, self.nx).T)

    def sample(self, fn):
        """Evaluate ``fn(x, y) -> (u, v)`` at the faces into a DOF vector."""
        x, y = self.face_positions.T
        fu, fv = fn(x, y)
        fu = np.broadcast_to(fu, x.shape)
        fv = np.broadcast_to(fv, x.shape)
        return np.where(self.component == 0, fu, fv).astype(float)

    def cell_velocity(self, v):
        """Velocity averaged to cell centres, shape ``(n_cells, 2)``."""
        v = self._check(v, self.n_dofs)
        ic, jc = self._cell_ij
        u = 0.5 * (v[self.u_id[ic, jc]] + v[self.u_id[ic + 1, jc]])
        w = 0.5 * (v[self.v_id[ic, jc]] + v[self.v_id[ic, jc + 1]])
        return np.column_stack([u, w])

    def kinetic_energy(self, v):
        v = self._check(v, self.n_dofs)
        return 0.5 * v @ (self.Mf @ v)

    # ------------------------------------------------------------ operators
    def divergence(self, v):
        """Volume-integrated divergence ``G.T v``, one value per cell."""
        return self.G.T @ self._check(v, self.n_dofs)

    def gradient(self, p):
        """``G p``: minus the volume-integrated pressure gradient at each face."""
        return self.G @ self._check(p, self.n_cells, "pressure")

    def laplacian_bc(self, bc_table=None):
        return self._L_bc @ self._table(bc_table).ravel()

    def laplacian_apply(self, v, bc_table=None):
        return self.L @ self._check(v, self.n_dofs) + self.laplacian_bc(bc_table)

    def convective(self, v, bc_table=None):
        """Skew-symmetric convective term ``N(v)``."""
        v = self._check(v, self.n_dofs)
        t = self._table(bc_table)
        out = np.zeros(self.n_dofs)
        for f1, f2, alpha, nb in self._conv:
            out += alpha * (f1.value(v, t) + f2.value(v, t)) * nb.value(v, t)
        return 0.5 * out

    def convective_jacobian(self, v, bc_table=None):
        v = self._check(v, self.n_dofs)
        t = self._table(bc_table)
        a = np.arange(self.n_dofs)
        rows, cols, data = [], [], []
        for f1, f2, alpha, nb in self._conv:
            nbval = nb.value(v, t)
            flux = alpha * (f1.value(v, t) + f2.value(v, t))
            rows += [a, a, a]
            cols += [f1.idx, f2.idx, nb.idx]
            data += [0.5 * alpha * f1.w * nbval, 0.5 * alpha * f2.w * nbval, 0.5 * flux * nb.w]
        J = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_dofs, self.n_dofs),
        )
        return J

    def boundary_rows(self, bc_table=None):
        """Selection matrix of pinned boundary DOFs and their prescribed values."""
        t = self._table(bc_table)
        return self.B, t[self._bc_side, self._bc_comp] if self._bc_side.size else np.zeros(0)

    def vorticity(self, v, bc_table=None):
        """``dv/dx - du/dy`` at the ``(nx+1)*(ny+1)`` cell corners (row-major in ``j``)."""
        v = self._check(v, self.n_dofs)
        t = self._table(bc_table)
        out = self._vort @ v
        for side, cf, comp, k in self._vort_terms:
            s = np.where(side < 0, 0, side)
            out += np.where(side < 0, 0.0, k * cf * t[s, comp])
        return out


def _concat(a, b):
    return _Refs(
        np.concatenate([a.idx, b.idx]),
        np.concatenate([a.w, b.w]),
        np.concatenate([a.side, b.side]),
        np.concatenate([a.cf, b.cf]),
        np.concatenate([np.full(a.idx.size, a.comp), np.full(b.idx.size, b.comp)]),
    )


def build_grid(config: GridConfig, props: FluidProperties | None = None) -> FluidGrid:
    return FluidGrid(config, props or FluidProperties())
