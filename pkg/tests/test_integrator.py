import numpy as np
import pytest
import scipy.sparse.linalg as spla

from varfsi.bodies import (BodySystem, BoundaryMesh, FixedBody, PrescribedAngle, RevoluteJoint,
                           RigidBody2D, SinusoidalSchedule)
from varfsi.errors import AssemblyError, NonConvergenceError
from varfsi.integrator import BLOCKS, CoupledProblem, IntegratorConfig, with_step

from conftest import box_grid, channel_grid, free_disc, periodic_grid


def divergence_free(grid, rng, scale=1.0):
    """Discrete curl of a random node streamfunction (periodic grid)."""
    n = grid.nx
    psi = rng.standard_normal((n, n)) * scale
    # u(i, j) on left face of cell (i, j), v(i, j) on bottom face
    u = (np.roll(psi, -1, axis=1) - psi) / grid.dy
    v = -(np.roll(psi, -1, axis=0) - psi) / grid.dx
    out = np.empty(grid.n_dofs)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    out[grid.u_id[ii, jj].ravel()] = u.ravel()
    out[grid.v_id[ii, jj].ravel()] = v.ravel()
    return out


def swimmer_like():
    bodies = [RigidBody2D(1.0, 0.05, (0.5, 0.5, 0.1)), RigidBody2D(0.4, 0.01, (0.33, 0.48, 0.3))]
    meshes = [BoundaryMesh.rectangle(0.2, 0.1, 0.06), BoundaryMesh.line((0.07, 0), (-0.07, 0), 0.05)]
    cons = [RevoluteJoint(0, 1, (-0.1, 0.0), (0.07, 0.0)),
            PrescribedAngle(1, 0, SinusoidalSchedule(0.3, 1.0))]
    return BodySystem(bodies, meshes, cons)


def fd_kkt(problem, state_k, x, t, eps=1e-7):
    J = problem.kkt_jacobian(state_k, x, t).toarray()
    Jfd = np.empty_like(J)
    for k in range(problem.n):
        e = np.zeros(problem.n)
        e[k] = eps
        Jfd[:, k] = (problem.residual(state_k, x + e, t) - problem.residual(state_k, x - e, t)) / (2 * eps)
    return J, Jfd


def random_point(problem, rng):
    g, s = problem.grid, problem.system
    st = problem.initial_state(v_fluid=rng.standard_normal(g.n_dofs), vels=0.3 * rng.standard_normal(s.n_dofs))
    x = np.concatenate([rng.standard_normal(g.n_dofs), st.poses + 0.01 * rng.standard_normal(s.n_dofs),
                        rng.standard_normal(problem.n - g.n_dofs - s.n_dofs)])
    return st, x


CASES = {
    "channel-free-midpoint": lambda: CoupledProblem(channel_grid(8), free_disc(n_seg=8),
                                                   IntegratorConfig(h=0.05)),
    "channel-free-trapezoidal": lambda: CoupledProblem(
        channel_grid(8), free_disc(n_seg=8), IntegratorConfig(h=0.05, convection="trapezoidal")),
    "box-chain-gauge": lambda: CoupledProblem(box_grid(8), swimmer_like(), IntegratorConfig(h=0.05)),
    "periodic-classical-eps": lambda: CoupledProblem(
        periodic_grid(8, mu=0.1), free_disc(n_seg=7),
        IntegratorConfig(h=0.05, coupling="classical", dual_regularization=1e-3)),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_kkt_jacobian_matches_finite_differences(name, rng):
    problem = CASES[name]()
    st, x = random_point(problem, rng)
    J, Jfd = fd_kkt(problem, st, x, 0.05)
    assert np.abs(J - Jfd).max() <= 1e-6 * np.abs(J).max()


def test_kkt_symmetric_on_the_stokes_part():
    p = CoupledProblem(box_grid(6), BodySystem.empty(), IntegratorConfig(h=0.1, convection="none"))
    st = p.initial_state()
    J = p.kkt_jacobian(st, p.pack(st.v_fluid, st.poses, st.vels, p.zero_duals()), 0.1)
    assert abs(J - J.T).max() < 1e-15


def test_gauge_solver_is_exact(rng):
    p = CoupledProblem(box_grid(8), swimmer_like(), IntegratorConfig(h=0.05))
    assert p.gauge
    st, x = random_point(p, rng)
    b = rng.standard_normal(p.n)
    exact = spla.spsolve(p.kkt_jacobian(st, x, 0.05).tocsc(), b)
    solve = p._gauge_solver(p._factorize(p.kkt_jacobian(st, x, 0.05, pinned=True)))
    assert np.allclose(solve(b), exact, rtol=1e-9, atol=1e-9 * np.abs(exact).max())


def test_energy_conserved_inviscid_periodic(rng):
    g = periodic_grid(12, L=1.0)
    # tight tolerance: the remaining drift is the Newton residual, not the scheme
    p = CoupledProblem(g, BodySystem.empty(), IntegratorConfig(h=0.02, newton_tol=1e-13))
    v0 = divergence_free(g, rng, 0.05)
    traj = p.simulate(p.initial_state(v0), 40)
    e = np.array([r[2] for r in traj.records])
    e0 = g.kinetic_energy(v0)
    assert np.abs(e - e0).max() / e0 < 1e-11
    assert max(r[3] for r in traj.records) <= 1e-13


def test_time_reversal(rng):
    g = periodic_grid(10)
    p = CoupledProblem(g, BodySystem.empty(), IntegratorConfig(h=0.02, newton_tol=1e-12))
    v0 = divergence_free(g, rng, 0.05)
    fwd = p.simulate(p.initial_state(v0), 15).state
    back = p.simulate(p.initial_state(-fwd.v_fluid), 15).state
    assert np.abs(back.v_fluid + v0).max() < 1e-9 * np.abs(v0).max() + 1e-10


def test_total_momentum_with_free_body(rng):
    g = periodic_grid(16, mu=0.0)
    s = free_disc(radius=0.15, n_seg=10, velocity=(0.3, -0.2, 1.0))
    p = CoupledProblem(g, s, IntegratorConfig(h=0.02))
    st = p.initial_state(v_fluid=divergence_free(g, rng, 0.02))

    def momentum(vf, vr):
        f = g.Mf @ vf
        return np.array([f[: g.n_u].sum(), f[g.n_u :].sum()]) + s.momentum(vr)[:2]

    m0 = momentum(st.v_fluid, st.vels)
    traj = p.simulate(st, 10, callback=lambda k, sol: None)
    fin = traj.state
    assert np.abs(momentum(fin.v_fluid, fin.vels) - m0).max() < 1e-8
    # the coupling is active: the body exchanged momentum with the fluid
    assert np.abs(fin.vels[:2] - st.vels[:2]).max() > 1e-4


def test_fixed_body_stays_and_forces_are_recorded():
    g = channel_grid(12, mu=0.05)
    b = BodySystem([RigidBody2D(1.0, 0.1, (0.4, 0.5, 0.0))], [BoundaryMesh.circle(0.1, 8)],
                   [FixedBody(0, (0.4, 0.5, 0.0))])
    p = CoupledProblem(g, b, IntegratorConfig(h=0.05))
    traj = p.simulate(p.initial_state(v_fluid=g.sample(lambda x, y: (1.0, 0.0))), 5)
    assert np.allclose(traj.pose_history(), [0.4, 0.5, 0.0], atol=1e-10)
    F = traj.force_history()
    assert F.shape == (5, 1, 3) and F[-1, 0, 0] > 0
    assert len(traj.records[0]) == 6 + 3


def test_chord_and_full_newton_agree(rng):
    g = channel_grid(10, mu=0.02)
    s = free_disc(center=(0.5, 0.5), radius=0.12, n_seg=9)
    base = IntegratorConfig(h=0.05, newton_tol=1e-11)
    a = CoupledProblem(g, s, base).simulate(CoupledProblem(g, s, base).initial_state(), 6).state
    pc = CoupledProblem(g, s, IntegratorConfig(h=0.05, newton_tol=1e-11, reuse_factorization=0.3))
    b = pc.simulate(pc.initial_state(), 6).state
    assert np.abs(a.v_fluid - b.v_fluid).max() < 1e-8
    assert np.abs(a.poses - b.poses).max() < 1e-8
    assert pc.n_factorizations < 6 * 2


def test_gravity_sinks_heavy_body_only():
    from varfsi.grid import FluidProperties, GridConfig, build_grid

    # in a closed box the fluid weight is carried by pressure
    g = build_grid(GridConfig(12, 12, 1 / 12, 1 / 12), FluidProperties(1.0, 0.1, (0.0, -1.0)))
    final = {}
    for name, offset in (("heavy", 0.1), ("neutral", None)):
        body = RigidBody2D(0.2, 0.01, (0.5, 0.5, 0.0), buoyant_mass_offset=offset)
        p = CoupledProblem(g, BodySystem([body], [BoundaryMesh.circle(0.1, 8)]),
                           IntegratorConfig(h=0.05))
        final[name] = p.simulate(p.initial_state(), 3).state
    assert final["heavy"].poses[1] < 0.5 - 1e-4
    assert abs(final["neutral"].poses[1] - 0.5) < 1e-8
    assert np.abs(final["neutral"].v_fluid).max() < 1e-8


def test_errors_and_bookkeeping():
    p = CoupledProblem(box_grid(4), BodySystem.empty(), IntegratorConfig(h=0.1))
    assert p.block_of(0) == "fluid_velocity" and p.block_of(p.n - 1) == "gauge"
    assert len(BLOCKS) == len(p.sizes)
    with pytest.raises(AssemblyError):
        p.unpack(np.zeros(3))
    with pytest.raises(ValueError):
        p.simulate(p.initial_state(), 0)
    with pytest.raises(ValueError):
        IntegratorConfig(h=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(h=0.1, convection="upwind")
    with pytest.raises(ValueError):
        IntegratorConfig(h=0.1, reuse_factorization=1.5)
    assert with_step(IntegratorConfig(h=0.1), 0.2).h == 0.2


def test_nonconvergence_reports_step():
    g = channel_grid(8, mu=0.01)
    p = CoupledProblem(g, BodySystem.empty(), IntegratorConfig(h=0.5, newton_tol=1e-300,
                                                               max_newton_iters=2))
    with pytest.raises(NonConvergenceError) as info:
        p.simulate(p.initial_state(), 3)
    assert info.value.step == 1 and "step 1" in str(info.value)
