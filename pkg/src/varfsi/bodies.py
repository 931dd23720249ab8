"""Planar rigid multibody systems: poses, mass matrices, joints, boundary meshes.

A pose is ``(x, y, theta)`` and a velocity ``(vx, vy, omega)``; system vectors
stack these per body. Orientation is stored unwrapped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import MeshError, SchedulingError


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def perp(a):
    """Rotate 2-vectors (last axis) by +90 degrees: (a, b) -> (-b, a)."""
    a = np.asarray(a, float)
    return np.stack([-a[..., 1], a[..., 0]], axis=-1)


def wrap_angle(theta):
    """Map to (-pi, pi]; for reporting only."""
    return math.pi - (math.pi - theta) % (2 * math.pi)


@dataclass
class RigidBody2D:
    mass: float
    inertia: float
    pose: Sequence[float] = (0.0, 0.0, 0.0)
    velocity: Sequence[float] = (0.0, 0.0, 0.0)
    # mass supported by buoyancy; None means neutrally buoyant
    buoyant_mass_offset: float | None = None
    name: str = ""

    def __post_init__(self):
        if not (self.mass > 0 and self.inertia > 0):
            raise ValueError("rigid body needs positive mass and inertia")
        self.pose = np.asarray(self.pose, float).copy()
        self.velocity = np.asarray(self.velocity, float).copy()
        if self.buoyant_mass_offset is None:
            self.buoyant_mass_offset = self.mass

    @property
    def effective_gravity_mass(self):
        return self.mass - self.buoyant_mass_offset


@dataclass
class BoundaryMesh:
    """Body-frame polyline. ``segments`` are ordered node-index pairs."""

    nodes: np.ndarray
    segments: np.ndarray
    closed: bool = False

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, float).reshape(-1, 2)
        self.segments = np.asarray(self.segments, int).reshape(-1, 2)
        if self.segments.size and (
            self.segments.min() < 0 or self.segments.max() >= len(self.nodes)
        ):
            raise MeshError("segment refers to a missing node")
        if np.any(self.lengths <= 0):
            bad = int(np.argmin(self.lengths))
            raise MeshError(f"segment {bad} has zero length")

    @property
    def lengths(self):
        a, b = self.nodes[self.segments[:, 0]], self.nodes[self.segments[:, 1]]
        return np.linalg.norm(b - a, axis=1)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_segments(self):
        return len(self.segments)

    @classmethod
    def polyline(cls, points, closed=False):
        pts = np.asarray(points, float)
        n = len(pts)
        seg = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        if closed:
            seg = np.vstack([seg, [n - 1, 0]])
        return cls(pts, seg, closed)

    @classmethod
    def circle(cls, radius, n_segments, center=(0.0, 0.0)):
        if n_segments < 3:
            raise MeshError("a closed circle needs at least 3 segments")
        t = 2 * np.pi * np.arange(n_segments) / n_segments
        pts = np.column_stack([radius * np.cos(t), radius * np.sin(t)]) + center
        return cls.polyline(pts, closed=True)

    @classmethod
    def rectangle(cls, width, height, spacing, center=(0.0, 0.0)):
        """Closed rectangle outline, corners included, counter-clockwise."""
        hw, hh = 0.5 * width, 0.5 * height
        corners = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh], [-hw, -hh]])
        pts = []
        for a, b in zip(corners[:-1], corners[1:]):
            n = max(1, int(round(np.linalg.norm(b - a) / spacing)))
            s = np.arange(n)[:, None] / n
            pts.append(a + s * (b - a))
        return cls.polyline(np.vstack(pts) + center, closed=True)

    @classmethod
    def line(cls, start, end, spacing):
        start, end = np.asarray(start, float), np.asarray(end, float)
        n = max(1, int(round(np.linalg.norm(end - start) / spacing)))
        s = np.linspace(0.0, 1.0, n + 1)[:, None]
        return cls.polyline(start + s * (end - start))


class SinusoidalSchedule:
    """``offset + amplitude * w(t) * sin(2 pi f t + phase)`` on ``[0, t_end]``.

    ``w`` rises from 0 to 1 as ``(1 - cos(pi t / ramp)) / 2`` over the first
    ``ramp`` time units, so a gait can start from rest.
    """

    def __init__(self, amplitude, frequency, phase=0.0, offset=0.0, t_end=math.inf, ramp=0.0):
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.phase = float(phase)
        self.offset = float(offset)
        self.t_end = float(t_end)
        self.ramp = float(ramp)
        if self.ramp < 0:
            raise SchedulingError("ramp time must be non-negative")

    def __call__(self, t):
        if not (0.0 <= t <= self.t_end + 1e-12):
            raise SchedulingError(f"gait schedule undefined at t={t:g}")
        w = 0.5 * (1.0 - math.cos(math.pi * t / self.ramp)) if t < self.ramp else 1.0
        return self.offset + self.amplitude * w * math.sin(2 * math.pi * self.frequency * t + self.phase)

    def mirrored(self):
        return SinusoidalSchedule(-self.amplitude, self.frequency, self.phase, -self.offset,
                                  self.t_end, self.ramp)


# --------------------------------------------------------------- constraints
# Each constraint works on the stacked pose vector q (3 entries per body).


@dataclass
class FixedBody:
    body: int
    pose: Sequence[float]
    dim: int = field(default=3, init=False)

    def __post_init__(self):
        self.pose = np.asarray(self.pose, float)

    def residual(self, q, t):
        return q[3 * self.body : 3 * self.body + 3] - self.pose

    def jacobian(self, q, t):
        J = np.zeros((3, q.size))
        J[:, 3 * self.body : 3 * self.body + 3] = np.eye(3)
        return J

    def jacobian_t_derivative(self, q, lam, t):
        return np.zeros((q.size, q.size))


@dataclass
class RevoluteJoint:
    body_a: int
    body_b: int
    anchor_a: Sequence[float]
    anchor_b: Sequence[float]
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        self.anchor_a = np.asarray(self.anchor_a, float)
        self.anchor_b = np.asarray(self.anchor_b, float)
        if not (np.all(np.isfinite(self.anchor_a)) and np.all(np.isfinite(self.anchor_b))):
            raise ValueError("joint anchors must be finite")

    def _arms(self, q):
        ia, ib = 3 * self.body_a, 3 * self.body_b
        ra = rotation(q[ia + 2]) @ self.anchor_a
        rb = rotation(q[ib + 2]) @ self.anchor_b
        return ia, ib, ra, rb

    def residual(self, q, t):
        ia, ib, ra, rb = self._arms(q)
        return (q[ia : ia + 2] + ra) - (q[ib : ib + 2] + rb)

    def jacobian(self, q, t):
        ia, ib, ra, rb = self._arms(q)
        J = np.zeros((2, q.size))
        J[:, ia : ia + 2] = np.eye(2)
        J[:, ia + 2] = perp(ra)
        J[:, ib : ib + 2] = -np.eye(2)
        J[:, ib + 2] = -perp(rb)
        return J

    def jacobian_t_derivative(self, q, lam, t):
        """d/dq of ``jacobian(q).T @ lam``."""
        ia, ib, ra, rb = self._arms(q)
        H = np.zeros((q.size, q.size))
        H[ia + 2, ia + 2] = -lam @ ra
        H[ib + 2, ib + 2] = lam @ rb
        return H


@dataclass
class PrescribedAngle:
    """``(theta_a - theta_b) - schedule(t) = 0``; ``body_b=None`` means absolute."""

    body_a: int
    body_b: int | None
    schedule: Callable[[float], float]
    dim: int = field(default=1, init=False)

    def target(self, t):
        val = self.schedule(t)
        if not np.isfinite(val):
            raise SchedulingError(f"angle schedule is not finite at t={t:g}")
        return float(val)

    def residual(self, q, t):
        rel = q[3 * self.body_a + 2]
        if self.body_b is not None:
            rel = rel - q[3 * self.body_b + 2]
        return np.array([rel - self.target(t)])

    def jacobian(self, q, t):
        self.target(t)
        J = np.zeros((1, q.size))
        J[0, 3 * self.body_a + 2] = 1.0
        if self.body_b is not None:
            J[0, 3 * self.body_b + 2] = -1.0
        return J

    def jacobian_t_derivative(self, q, lam, t):
        return np.zeros((q.size, q.size))


# ---------------------------------------------------------------- the system


class BodySystem:
    """Bodies, one boundary mesh per body, and the joint/actuation constraints."""

    def __init__(self, bodies, meshes, constraints=()):
        self.bodies = list(bodies)
        self.meshes = list(meshes)
        self.constraints = list(constraints)
        if len(self.meshes) != len(self.bodies):
            raise ValueError("need exactly one boundary mesh per body")
        self.n_bodies = len(self.bodies)
        self.n_dofs = 3 * self.n_bodies
        self.n_constraints = sum(c.dim for c in self.constraints)
        if self.n_constraints > self.n_dofs:
            raise ValueError("more constraint rows than body velocity DOFs")
        diag = []
        for b in self.bodies:
            diag += [b.mass, b.mass, b.inertia]
        self.mass_matrix = sp.diags(np.array(diag, float)).tocsr()
        # node bookkeeping for the stacked world-node array
        self.node_body = np.concatenate(
            [np.full(m.n_nodes, k) for k, m in enumerate(self.meshes)] or [np.zeros(0, int)]
        ).astype(int)
        self.local_nodes = (
            np.vstack([m.nodes for m in self.meshes]) if self.meshes else np.zeros((0, 2))
        )
        offsets = np.cumsum([0] + [m.n_nodes for m in self.meshes])
        self.segments = (
            np.vstack([m.segments + o for m, o in zip(self.meshes, offsets)])
            if self.meshes else np.zeros((0, 2), int)
        )
        self.segment_body = self.node_body[self.segments[:, 0]] if len(self.segments) else np.zeros(0, int)

    @classmethod
    def empty(cls):
        return cls([], [], [])

    @property
    def n_nodes(self):
        return len(self.local_nodes)

    @property
    def n_segments(self):
        return len(self.segments)

    def initial_poses(self):
        return np.concatenate([b.pose for b in self.bodies]) if self.bodies else np.zeros(0)

    def initial_velocities(self):
        return np.concatenate([b.velocity for b in self.bodies]) if self.bodies else np.zeros(0)

    def gravity_impulse(self, g, h):
        """``h * (m - m_buoyant) * g`` stacked per body (no torque)."""
        out = np.zeros(self.n_dofs)
        for k, b in enumerate(self.bodies):
            out[3 * k : 3 * k + 2] = h * b.effective_gravity_mass * np.asarray(g, float)
        return out

    def momentum(self, vels):
        return self.mass_matrix @ vels

    # ------------------------------------------------------------ kinematics
    def world_points(self, poses, body_idx, local_pts):
        poses = np.asarray(poses, float).reshape(-1, 3)
        th = poses[body_idx, 2]
        c, s = np.cos(th), np.sin(th)
        lx, ly = local_pts[:, 0], local_pts[:, 1]
        return np.column_stack(
            [poses[body_idx, 0] + c * lx - s * ly, poses[body_idx, 1] + s * lx + c * ly]
        )

    def world_nodes(self, poses):
        return self.world_points(poses, self.node_body, self.local_nodes)

    def arms(self, poses, body_idx, local_pts):
        """World-frame offsets ``R(theta) r`` from body origins."""
        poses = np.asarray(poses, float).reshape(-1, 3)
        return self.world_points(poses, body_idx, local_pts) - poses[body_idx, :2]

    def point_velocity_jacobian(self, poses, body_idx, local_pts):
        """Sparse map from stacked body velocities to interleaved (x, y) point velocities."""
        r = perp(self.arms(poses, body_idx, local_pts))
        n = len(body_idx)
        rows = np.repeat(np.arange(2 * n), 2)
        cols = np.empty(4 * n, int)
        data = np.empty(4 * n)
        base = 3 * np.asarray(body_idx, int)
        cols[0::4], cols[1::4] = base, base + 2
        cols[2::4], cols[3::4] = base + 1, base + 2
        data[0::4], data[1::4] = 1.0, r[:, 0]
        data[2::4], data[3::4] = 1.0, r[:, 1]
        return sp.csr_matrix((data, (rows, cols)), shape=(2 * n, self.n_dofs))

    def node_velocity_jacobian(self, poses):
        return self.point_velocity_jacobian(poses, self.node_body, self.local_nodes)

    def node_velocities(self, poses, vels):
        vels = np.asarray(vels, float).reshape(-1, 3)
        r = perp(self.arms(poses, self.node_body, self.local_nodes))
        out = vels[self.node_body, :2] + vels[self.node_body, 2:3] * r
        return out.ravel()

    def point_velocity_pose_derivative(self, poses, body_idx, local_pts, vels):
        """d/dq of ``J(q) @ vels`` (interleaved rows, pose columns)."""
        vels = np.asarray(vels, float).reshape(-1, 3)
        arm = self.arms(poses, body_idx, local_pts)
        om = vels[body_idx, 2]
        n = len(body_idx)
        # d/dtheta of omega * perp(R r) = -omega * R r
        rows = np.arange(2 * n)
        cols = np.repeat(3 * np.asarray(body_idx, int) + 2, 2)
        data = (-om[:, None] * arm).ravel()
        return sp.csr_matrix((data, (rows, cols)), shape=(2 * n, self.n_dofs))

    def point_force_pose_derivative(self, poses, body_idx, local_pts, lam):
        """d/dq of ``J(q).T @ lam`` for interleaved point multipliers ``lam``."""
        lam = np.asarray(lam, float).reshape(-1, 2)
        arm = self.arms(poses, body_idx, local_pts)
        # torque row is sum lam . perp(R r); derivative is -lam . R r
        val = -np.einsum("ij,ij->i", lam, arm)
        th = 3 * np.asarray(body_idx, int) + 2
        return sp.csr_matrix((val, (th, th)), shape=(self.n_dofs, self.n_dofs))

    # ----------------------------------------------------------- constraints
    def constraint_eval(self, poses, t):
        poses = np.asarray(poses, float)
        if not self.constraints:
            return np.zeros(0)
        return np.concatenate([c.residual(poses, t) for c in self.constraints])

    def constraint_jacobian(self, poses, t):
        poses = np.asarray(poses, float)
        if not self.constraints:
            return sp.csr_matrix((0, self.n_dofs))
        return sp.csr_matrix(np.vstack([c.jacobian(poses, t) for c in self.constraints]))

    def constraint_jacobian_t_derivative(self, poses, lam, t):
        poses = np.asarray(poses, float)
        H = np.zeros((self.n_dofs, self.n_dofs))
        k = 0
        for c in self.constraints:
            H += c.jacobian_t_derivative(poses, lam[k : k + c.dim], t)
            k += c.dim
        return sp.csr_matrix(H)
