import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varfsi.bodies import (BodySystem, BoundaryMesh, FixedBody, PrescribedAngle, RevoluteJoint,
                           RigidBody2D, SinusoidalSchedule, wrap_angle)
from varfsi.errors import MeshError, SchedulingError


def chain(n_bodies=3):
    bodies = [RigidBody2D(1.0 + k, 0.1 + k, (0.3 * k, 0.1, 0.2 * k)) for k in range(n_bodies)]
    meshes = [BoundaryMesh.line((-0.1, 0.0), (0.1, 0.0), 0.05) for _ in bodies]
    cons = [RevoluteJoint(k, k + 1, (-0.1, 0.02), (0.1, -0.01)) for k in range(n_bodies - 1)]
    cons.append(PrescribedAngle(1, 0, SinusoidalSchedule(0.4, 1.3, 0.2)))
    cons.append(PrescribedAngle(2, None, lambda t: 0.1 * t))
    cons.append(FixedBody(0, (0.0, 0.1, 0.0)))
    return BodySystem(bodies, meshes, cons)


def fd_jacobian(f, x, eps=1e-6):
    cols = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = eps
        cols.append((f(x + e) - f(x - e)) / (2 * eps))
    return np.column_stack(cols)


poses = st.lists(st.floats(-2, 2), min_size=9, max_size=9).map(np.array)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(q=poses, t=st.floats(0, 3))
def test_constraint_jacobian_matches_fd(q, t):
    s = chain()
    J = s.constraint_jacobian(q, t).toarray()
    Jfd = fd_jacobian(lambda x: s.constraint_eval(x, t), q)
    assert np.abs(J - Jfd).max() <= 1e-6 * max(1.0, np.abs(J).max())


@settings(max_examples=25, deadline=None, derandomize=True)
@given(q=poses, lam=st.lists(st.floats(-3, 3), min_size=9, max_size=9).map(np.array))
def test_constraint_hessian_term_matches_fd(q, lam):
    s = chain()
    lam = lam[: s.n_constraints]
    H = s.constraint_jacobian_t_derivative(q, lam, 0.5).toarray()
    Hfd = fd_jacobian(lambda x: s.constraint_jacobian(x, 0.5).T @ lam, q)
    assert np.abs(H - Hfd).max() <= 1e-6 * max(1.0, np.abs(H).max())


@settings(max_examples=25, deadline=None, derandomize=True)
@given(q=poses, v=st.lists(st.floats(-2, 2), min_size=9, max_size=9).map(np.array))
def test_point_velocity_and_derivatives(q, v):
    s = chain()
    body, local = s.node_body, s.local_nodes
    J = s.point_velocity_jacobian(q, body, local)
    # velocity of a material point equals d/dt of its world position along q + t v
    Xdot = fd_jacobian(lambda x: s.world_points(x, body, local).ravel(), q) @ v
    assert np.allclose(J @ v, Xdot, atol=1e-7)
    D = s.point_velocity_pose_derivative(q, body, local, v).toarray()
    Dfd = fd_jacobian(lambda x: s.point_velocity_jacobian(x, body, local) @ v, q)
    assert np.abs(D - Dfd).max() < 1e-6
    lam = np.sin(np.arange(2 * len(body)))
    F = s.point_force_pose_derivative(q, body, local, lam).toarray()
    Ffd = fd_jacobian(lambda x: s.point_velocity_jacobian(x, body, local).T @ lam, q)
    assert np.abs(F - Ffd).max() < 1e-6


def test_system_bookkeeping():
    s = chain()
    assert s.n_dofs == 9 and s.n_constraints == 2 + 2 + 1 + 1 + 3
    assert s.mass_matrix.diagonal().tolist() == [1, 1, 0.1, 2, 2, 1.1, 3, 3, 2.1]
    assert s.n_nodes == 15 and s.n_segments == 12
    assert np.array_equal(s.segments[4], [5, 6])
    assert np.array_equal(s.segment_body[[0, 4, 11]], [0, 1, 2])
    assert np.allclose(s.momentum(np.ones(9)), s.mass_matrix.diagonal())


def test_gravity_impulse_respects_buoyancy():
    heavy = RigidBody2D(2.0, 1.0, buoyant_mass_offset=0.5)
    neutral = RigidBody2D(2.0, 1.0)
    s = BodySystem([heavy, neutral], [BoundaryMesh.circle(0.1, 4)] * 2)
    imp = s.gravity_impulse((0.0, -10.0), 0.1)
    assert np.allclose(imp, [0, -1.5, 0, 0, 0, 0])


def test_meshes():
    c = BoundaryMesh.circle(0.5, 12)
    assert c.n_segments == 12 and c.closed
    assert np.allclose(np.linalg.norm(c.nodes, axis=1), 0.5)
    assert c.lengths.sum() == pytest.approx(12 * 2 * 0.5 * math.sin(math.pi / 12))
    r = BoundaryMesh.rectangle(0.4, 0.2, 0.1)
    assert r.n_segments == 12 and r.lengths.sum() == pytest.approx(1.2)
    ln = BoundaryMesh.line((0, 0), (0.3, 0), 0.1)
    assert ln.n_nodes == 4 and not ln.closed
    with pytest.raises(MeshError):
        BoundaryMesh.polyline([[0, 0], [0, 0], [1, 0]])
    with pytest.raises(MeshError):
        BoundaryMesh(np.zeros((2, 2)), [[0, 2]])
    with pytest.raises(MeshError):
        BoundaryMesh.circle(1.0, 2)


def test_schedule():
    s = SinusoidalSchedule(0.5, 2.0, phase=0.3, offset=0.1, t_end=1.0)
    assert s(0.2) == pytest.approx(0.1 + 0.5 * math.sin(2 * math.pi * 2 * 0.2 + 0.3))
    m = s.mirrored()
    assert m(0.7) == pytest.approx(-s(0.7))
    with pytest.raises(SchedulingError):
        s(1.5)
    with pytest.raises(SchedulingError):
        s(-0.1)
    r = SinusoidalSchedule(1.0, 1.0, phase=math.pi / 2, ramp=2.0)
    assert r(0.0) == 0.0 and r(1.0) == pytest.approx(0.5) and r(3.0) == pytest.approx(1.0)
    with pytest.raises(SchedulingError):
        PrescribedAngle(0, None, lambda t: math.nan).residual(np.zeros(3), 0.0)


def test_invalid_bodies():
    with pytest.raises(ValueError):
        RigidBody2D(0.0, 1.0)
    with pytest.raises(ValueError):
        BodySystem([RigidBody2D(1, 1)], [])
    with pytest.raises(ValueError):
        RevoluteJoint(0, 1, (math.inf, 0), (0, 0))
    with pytest.raises(ValueError):
        BodySystem([RigidBody2D(1, 1)], [BoundaryMesh.circle(0.1, 4)],
                   [FixedBody(0, (0, 0, 0)), RevoluteJoint(0, 0, (0, 0), (1, 0))])


def test_wrap_angle():
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi) or wrap_angle(3 * math.pi) == pytest.approx(-math.pi)
    assert wrap_angle(0.5) == pytest.approx(0.5)
