"""Implicit midpoint variational step for the coupled fluid/multibody system.

Unknowns of one step are the new midpoint fluid velocity, body poses and body
velocities together with every multiplier: pressure impulses ``p``, boundary
impulses ``lam3``, joint impulses ``lam5`` and no-slip impulses ``lam6``.
All multipliers are impulses over the step, so the constraint force is
``jacobian.T @ lam / h``.

Residual blocks (constraint rows are negated so the KKT matrix is symmetric
wherever the physics is)::

    q - h/2 vr - (q_k + h/2 vr_k)                                  pose
    M (vr - vr_k) - h m_eff g - C5.T lam5 - Jb.T lam6              body
    Mf (vf - vf_k) - h [mu Lbar - rho Nbar + rho g dV]
                   - G p - B.T lam3 + E.T lam6                     fluid
    -(G.T vf) [- sigma]                                            mass
    -(B vf - v_bc)                                                 walls/inflow
    -c5(q, t)                                                      joints
    -(Jb vr - E vf) - eps lam6                                     no-slip
    [-sum(p)]                                                      gauge

``E`` is the integral-form ``Ebar`` by default and is rebuilt at the unknown
poses, so its pose derivatives enter the Jacobian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coupling import CouplingOperators, body_force_from_duals
from .errors import AssemblyError, NonConvergenceError, SingularityError

log = logging.getLogger(__name__)

BLOCKS = ("fluid_velocity", "body_pose", "body_velocity", "pressure",
          "boundary", "joint", "no_slip", "gauge")


@dataclass(frozen=True)
class IntegratorConfig:
    h: float
    newton_tol: float = 1e-8
    max_newton_iters: int = 50
    # at least this many updates per step, so slow transients are not frozen
    # once a step's change falls below the absolute tolerance
    min_newton_iters: int = 1
    dual_regularization: float = 0.0
    pressure_gauge: bool = True
    # "midpoint": N at the averaged velocity; "trapezoidal": averaged N; "none": Stokes
    convection: str = "midpoint"
    coupling: str = "integral"
    quadrature_order: int = 3
    max_backtracks: int = 8
    singular_pivot_tol: float = 1e-12
    # keep the last factorization while it contracts the residual by this
    # factor per solve (chord iterations); None refactorizes every iteration
    reuse_factorization: float | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("time step must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")
        if not 0 <= self.min_newton_iters <= self.max_newton_iters:
            raise ValueError("min_newton_iters must lie in [0, max_newton_iters]")
        if self.convection not in ("midpoint", "trapezoidal", "none"):
            raise ValueError(f"unknown convection treatment {self.convection!r}")
        if self.coupling not in ("integral", "classical"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.reuse_factorization is not None and not 0 < self.reuse_factorization < 1:
            raise ValueError("reuse_factorization must lie in (0, 1)")


@dataclass
class DualState:
    p: np.ndarray
    lam3: np.ndarray
    lam5: np.ndarray
    lam6: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class SimState:
    """Midpoint state at time ``t``; duals are kept to warm-start the next step."""

    t: float
    v_fluid: np.ndarray
    poses: np.ndarray
    vels: np.ndarray
    duals: DualState | None = None


@dataclass
class StepSolution:
    t: float
    v_fluid: np.ndarray
    poses: np.ndarray
    vels: np.ndarray
    duals: DualState
    newton_iters: int
    residual_norm: float
    operators: CouplingOperators | None = None

    @property
    def p(self):
        return self.duals.p

    @property
    def lam3(self):
        return self.duals.lam3

    @property
    def lam5(self):
        return self.duals.lam5

    @property
    def lam6(self):
        return self.duals.lam6

    def state(self):
        return SimState(self.t, self.v_fluid, self.poses, self.vels, self.duals)


@dataclass
class Trajectory:
    """Final state plus per-step diagnostics; fields are not stored per step."""

    initial: SimState
    final: StepSolution | None = None
    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    poses: list = field(default_factory=list)
    vels: list = field(default_factory=list)
    forces: list = field(default_factory=list)
    # per-step ||v_{k+1} - v_k|| / ||v_{k+1}|| of the fluid velocity
    changes: list = field(default_factory=list)

    @property
    def state(self):
        return self.initial if self.final is None else self.final.state()

    def pose_history(self):
        return np.array(self.poses)

    def force_history(self):
        return np.array(self.forces)


RECORD_FIELDS = ("step", "t", "kinetic_energy", "divergence_inf", "newton_iters", "residual_inf")


class CoupledProblem:
    """Builds and solves the monolithic step for one grid and body system.

    Parameters
    ----------
    grid : FluidGrid
    system : BodySystem
    config : IntegratorConfig
    bc_schedule : callable, optional
        ``t -> (4, 2)`` table of side velocities; defaults to the grid's.
    """

    def __init__(self, grid, system, config, bc_schedule=None):
        self.grid, self.system, self.config = grid, system, config
        self.bc_schedule = bc_schedule
        self.gauge = bool(config.pressure_gauge and grid.needs_gauge)
        nf, nb = grid.n_dofs, system.n_dofs
        n6 = 2 * (system.n_segments if config.coupling == "integral" else system.n_nodes)
        if system.n_bodies == 0:
            n6 = 0
        self.sizes = (nf, nb, nb, grid.n_cells, grid.B.shape[0], system.n_constraints, n6,
                      1 if self.gauge else 0)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.n = int(self.offsets[-1])
        self._body_force = grid.Mf @ grid.sample(lambda x, y: grid.props.g)
        self._solve = None
        self.n_factorizations = 0

    # ------------------------------------------------------------- packing
    def unpack(self, x):
        if x.shape != (self.n,):
            raise AssemblyError(f"unknown vector has shape {x.shape}, expected ({self.n},)")
        o = self.offsets
        return [x[o[k] : o[k + 1]] for k in range(len(self.sizes))]

    def pack(self, vf, q, vr, duals):
        parts = [vf, q, vr, duals.p, duals.lam3, duals.lam5, duals.lam6,
                 duals.sigma if self.gauge else np.zeros(0)]
        for k, (part, n) in enumerate(zip(parts, self.sizes)):
            if np.size(part) != n:
                raise AssemblyError(f"block {BLOCKS[k]} has size {np.size(part)}, expected {n}")
        return np.concatenate([np.asarray(a, float).ravel() for a in parts])

    def zero_duals(self):
        s = self.sizes
        return DualState(np.zeros(s[3]), np.zeros(s[4]), np.zeros(s[5]), np.zeros(s[6]),
                         np.zeros(s[7]))

    def block_of(self, index):
        return BLOCKS[int(np.searchsorted(self.offsets, index, side="right") - 1)]

    def table(self, t):
        if self.bc_schedule is None:
            return self.grid.default_bc_table
        return np.asarray(self.bc_schedule(t), float)

    def initial_state(self, v_fluid=None, poses=None, vels=None, t=0.0):
        g, s = self.grid, self.system
        vf = np.zeros(g.n_dofs) if v_fluid is None else np.asarray(v_fluid, float).copy()
        q = s.initial_poses() if poses is None else np.asarray(poses, float).copy()
        vr = s.initial_velocities() if vels is None else np.asarray(vels, float).copy()
        if vf.shape != (g.n_dofs,) or q.shape != (s.n_dofs,) or vr.shape != (s.n_dofs,):
            raise AssemblyError("initial state does not match the grid/body sizes")
        return SimState(float(t), vf, q, vr, None)

    # ----------------------------------------------------------- operators
    def operators(self, q):
        if self.system.n_bodies == 0:
            return None
        return CouplingOperators(self.grid, self.system, q, self.config.coupling,
                                 self.config.quadrature_order)

    def _convection(self, vf_k, vf, tab_k, tab):
        g, mode = self.grid, self.config.convection
        if mode == "none":
            return np.zeros(g.n_dofs)
        if mode == "midpoint":
            return g.convective(0.5 * (vf + vf_k), 0.5 * (tab + tab_k))
        return 0.5 * (g.convective(vf_k, tab_k) + g.convective(vf, tab))

    def _convection_jacobian(self, vf_k, vf, tab_k, tab):
        g, mode = self.grid, self.config.convection
        if mode == "none":
            return sp.csr_matrix((g.n_dofs, g.n_dofs))
        if mode == "midpoint":
            return 0.5 * g.convective_jacobian(0.5 * (vf + vf_k), 0.5 * (tab + tab_k))
        return 0.5 * g.convective_jacobian(vf, tab)

    # ------------------------------------------------------------ residual
    def residual(self, state_k, x, t_new, ops=None):
        g, s, c = self.grid, self.system, self.config
        h, mu, rho = c.h, g.props.mu, g.props.rho
        vf, q, vr, p, l3, l5, l6, sig = self.unpack(x)
        tab_k, tab = self.table(state_k.t), self.table(t_new)
        if ops is None:
            ops = self.operators(q)

        r_q = q - 0.5 * h * vr - (state_k.poses + 0.5 * h * state_k.vels)
        r_b = s.mass_matrix @ (vr - state_k.vels) - s.gravity_impulse(g.props.g, h)
        if s.n_constraints:
            r_b -= s.constraint_jacobian(q, t_new).T @ l5
        lbar = 0.5 * (g.L @ (vf + state_k.v_fluid)) + 0.5 * (g.laplacian_bc(tab_k) + g.laplacian_bc(tab))
        nbar = self._convection(state_k.v_fluid, vf, tab_k, tab)
        r_f = (g.Mf @ (vf - state_k.v_fluid) - h * (mu * lbar - rho * nbar + self._body_force)
               - g.G @ p - g.B.T @ l3)
        r_div = -(g.G.T @ vf)
        if self.gauge:
            r_div = r_div - sig[0]
        B, v_bc = g.boundary_rows(tab)
        r_bc = -(B @ vf - v_bc)
        r_5 = -s.constraint_eval(q, t_new)
        if ops is not None:
            r_b -= ops.Jb.T @ l6
            r_f += ops.E.T @ l6
            r_6 = -(ops.Jb @ vr - ops.E @ vf) - c.dual_regularization * l6
        else:
            r_6 = np.zeros(0)
        parts = [r_f, r_q, r_b, r_div, r_bc, r_5, r_6]
        if self.gauge:
            parts.append(np.array([-p.sum()]))
        return np.concatenate(parts)

    # ------------------------------------------------------------ jacobian
    def kkt_jacobian(self, state_k, x, t_new, ops=None, pinned=False):
        """Jacobian of :meth:`residual`.

        With ``pinned`` the dense gauge row and column are replaced by their
        first entries only, which keeps the matrix sparse for factorization.
        """
        g, s, c = self.grid, self.system, self.config
        h, mu, rho = c.h, g.props.mu, g.props.rho
        vf, q, vr, p, l3, l5, l6, sig = self.unpack(x)
        tab_k, tab = self.table(state_k.t), self.table(t_new)
        if ops is None:
            ops = self.operators(q)
        nf, nb = g.n_dofs, s.n_dofs
        I_b = sp.identity(nb, format="csr")

        A = g.Mf - (0.5 * h * mu) * g.L + (h * rho) * self._convection_jacobian(
            state_k.v_fluid, vf, tab_k, tab)
        blocks = [[None] * 8 for _ in range(8)]
        F, Q, V, P, L3, L5, L6, S = range(8)
        blocks[F][F] = A
        blocks[F][P] = -g.G
        blocks[F][L3] = -g.B.T
        blocks[Q][Q] = I_b
        blocks[Q][V] = -0.5 * h * I_b
        blocks[V][V] = s.mass_matrix
        blocks[P][F] = -g.G.T
        blocks[L3][F] = -g.B
        if s.n_constraints:
            C5 = s.constraint_jacobian(q, t_new)
            blocks[V][L5] = -C5.T
            blocks[L5][Q] = -C5
            dq_b = -s.constraint_jacobian_t_derivative(q, l5, t_new)
        else:
            dq_b = sp.csr_matrix((nb, nb))
        if ops is not None:
            dq_b = dq_b - ops.body_force_pose_derivative(l6)
            blocks[V][L6] = -ops.Jb.T
            blocks[F][L6] = ops.E.T
            blocks[F][Q] = ops.adjoint_pose_derivative(l6)
            blocks[L6][F] = ops.E
            blocks[L6][V] = -ops.Jb
            blocks[L6][Q] = ops.fluid_pose_derivative(vf) - ops.body_velocity_pose_derivative(vr)
            n6 = self.sizes[6]
            blocks[L6][L6] = -c.dual_regularization * sp.identity(n6, format="csr") if n6 else None
        blocks[V][Q] = dq_b
        if self.gauge:
            col = np.zeros((g.n_cells, 1))
            col[0 if pinned else slice(None)] = 1.0
            col = sp.csr_matrix(col)
            blocks[P][S] = -col
            blocks[S][P] = -col.T
        # keep empty blocks shaped so bmat can infer sizes
        for k, n in enumerate(self.sizes):
            if blocks[k][k] is None:
                blocks[k][k] = sp.csr_matrix((n, n))
        return sp.bmat(blocks, format="csc")

    # --------------------------------------------------------------- solve
    def _factorize(self, J):
        # row/column equilibration so pivots are comparable across blocks
        J = J.tocsr()
        rmax = np.asarray(abs(J).max(axis=1).todense()).ravel()
        if np.any(rmax == 0):
            raise SingularityError(f"empty row in block {self.block_of(int(np.argmin(rmax)))}",
                                   block=self.block_of(int(np.argmin(rmax))))
        Dr = sp.diags(1.0 / rmax)
        J1 = Dr @ J
        cmax = np.asarray(abs(J1).max(axis=0).todense()).ravel()
        if np.any(cmax == 0):
            raise SingularityError(f"empty column in block {self.block_of(int(np.argmin(cmax)))}",
                                   block=self.block_of(int(np.argmin(cmax))))
        Dc = sp.diags(1.0 / cmax)
        Js = (J1 @ Dc).tocsc()
        try:
            lu = spla.splu(Js, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularityError(f"KKT factorization failed: {exc}", block="unknown") from exc
        piv = np.abs(lu.U.diagonal())
        k = int(np.argmin(piv))
        if piv[k] < self.config.singular_pivot_tol * piv.max():
            # U[k, k] pivots original column j where perm_c[j] == k
            # U[k, k] pivots original row i with perm_r[i] == k and column j with perm_c[j] == k;
            # dependent constraint rows show up through the row
            row = int(np.nonzero(lu.perm_r == k)[0][0])
            col = int(np.nonzero(lu.perm_c == k)[0][0])
            block = self.block_of(row)
            raise SingularityError(
                f"KKT matrix is numerically singular (pivot ratio {piv[k] / piv.max():.2e}) "
                f"at row block {block}, column block {self.block_of(col)}", block=block)

        def solve(b):
            return Dc @ lu.solve(Dr @ b)

        return solve

    def _gauge_solver(self, solve):
        """Exact solves with the mean-zero gauge from a factorization of the pinned matrix.

        The two differ by a rank-2 update (the gauge column and row), handled
        with the Woodbury identity.
        """
        o, n = self.offsets, self.n
        k = o[7]
        U = np.zeros((n, 2))
        U[o[3] + 1 : o[4], 0] = -1.0  # rest of the gauge column
        U[k, 1] = 1.0
        V = np.zeros((n, 2))
        V[k, 0] = 1.0
        V[o[3] + 1 : o[4], 1] = -1.0  # rest of the gauge row
        Z = np.column_stack([solve(U[:, 0]), solve(U[:, 1])])
        S = np.eye(2) + V.T @ Z

        def exact(b):
            y = solve(b)
            return y - Z @ np.linalg.solve(S, V.T @ y)

        return exact

    def newton_solve(self, state_k, t_new=None):
        c = self.config
        t_new = state_k.t + c.h if t_new is None else t_new
        duals = state_k.duals if state_k.duals is not None else self.zero_duals()
        q0 = state_k.poses + c.h * state_k.vels
        x = self.pack(state_k.v_fluid, q0, state_k.vels, duals)
        ops = self.operators(self.unpack(x)[1])
        r = self.residual(state_k, x, t_new, ops)
        rn = np.abs(r).max() if r.size else 0.0
        iters = 0
        rate = c.reuse_factorization
        while rn > c.newton_tol or iters < c.min_newton_iters:
            if iters >= c.max_newton_iters:
                raise NonConvergenceError(
                    f"Newton did not converge in {iters} iterations (residual {rn:.3e})", residual=rn)
            iters += 1
            if rate is not None and self._solve is not None:
                # chord step with a stale factorization; accept only if it contracts
                xt = x + self._solve(-r)
                opt = self.operators(self.unpack(xt)[1])
                rt = self.residual(state_k, xt, t_new, opt)
                rtn = np.abs(rt).max()
                if rtn < rate * rn or rtn <= c.newton_tol:
                    x, r, rn, ops = xt, rt, rtn, opt
                    log.debug("t=%.4g chord %d residual %.3e", t_new, iters, rn)
                    continue
                self._solve = None
            J = self.kkt_jacobian(state_k, x, t_new, ops, pinned=self.gauge)
            solve = self._factorize(J)
            if self.gauge:
                solve = self._gauge_solver(solve)
            self.n_factorizations += 1
            if rate is not None:
                self._solve = solve
            dx = solve(-r)
            alpha, best = 1.0, None
            for _ in range(c.max_backtracks + 1):
                xt = x + alpha * dx
                opt = self.operators(self.unpack(xt)[1])
                rt = self.residual(state_k, xt, t_new, opt)
                rtn = np.abs(rt).max()
                if best is None or rtn < best[2]:
                    best = (xt, rt, rtn, opt)
                if rtn < rn or rtn <= c.newton_tol:
                    break
                alpha *= 0.5
            x, r, rn, ops = best
            log.debug("t=%.4g newton %d residual %.3e", t_new, iters, rn)
        vf, q, vr, p, l3, l5, l6, sig = self.unpack(x)
        duals = DualState(p.copy(), l3.copy(), l5.copy(), l6.copy(), sig.copy())
        return StepSolution(t_new, vf.copy(), q.copy(), vr.copy(), duals, iters, rn, ops)

    # ---------------------------------------------------------- diagnostics
    def kinetic_energy(self, v_fluid, vels):
        e = self.grid.kinetic_energy(v_fluid)
        if self.system.n_bodies:
            e += 0.5 * vels @ (self.system.mass_matrix @ vels)
        return e

    def body_forces(self, sol):
        if sol.operators is None:
            return np.zeros((0, 3))
        return body_force_from_duals(sol.operators, sol.lam6, self.config.h)

    def simulate(self, state, n_steps, sinks=(), callback=None, steady_tol=None):
        """Advance ``n_steps``; each sink receives a flat numeric tuple per step.

        The tuple is ``(step, t, kinetic_energy, divergence_inf, newton_iters,
        residual_inf, Fx_0, Fy_0, Tz_0, Fx_1, ...)``. A callback returning
        ``True`` stops the run after the current step; so does a relative fluid
        change below ``steady_tol``.
        """
        if n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        traj = Trajectory(initial=state)
        for k in range(n_steps):
            try:
                sol = self.newton_solve(state)
            except (NonConvergenceError, SingularityError) as exc:
                exc.step = k + 1
                exc.args = (f"step {k + 1}: {exc.args[0]}",)
                raise
            forces = self.body_forces(sol)
            rec = (k + 1, sol.t, self.kinetic_energy(sol.v_fluid, sol.vels),
                   float(np.abs(self.grid.divergence(sol.v_fluid)).max()),
                   sol.newton_iters, sol.residual_norm, *forces.ravel())
            traj.times.append(sol.t)
            traj.records.append(rec)
            traj.poses.append(sol.poses.copy())
            traj.vels.append(sol.vels.copy())
            traj.forces.append(forces.copy())
            vn = np.linalg.norm(sol.v_fluid)
            dv = np.linalg.norm(sol.v_fluid - state.v_fluid)
            traj.changes.append(dv / vn if vn > 0 else (0.0 if dv == 0 else np.inf))
            for sink in sinks:
                sink(rec)
            traj.final = sol
            state = sol.state()
            if callback is not None and callback(k + 1, sol):
                break
            if steady_tol is not None and traj.changes[-1] < steady_tol:
                break
        return traj


def with_step(config, h):
    return replace(config, h=h)
