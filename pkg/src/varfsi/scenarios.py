"""Benchmark scenarios and their post-processing.

Three setups are provided:

* Poiseuille channel flow driven by a uniform body force (periodic in x),
* a fixed disc in a uniform stream,
* a free three-link swimmer (rectangular body plus two trailing fin plates)
  in a walled box.

Builders are pure: they return a :class:`Scenario` holding the grid, body
system, integrator settings and initial state, and never run anything.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .bodies import (BodySystem, BoundaryMesh, FixedBody, PrescribedAngle, RevoluteJoint,
                     RigidBody2D, SinusoidalSchedule, rotation)
from .coupling import SUPPORT
from .errors import (ConfigurationError, GeometryError, HistoryError, SteadinessError,
                     ValidationError)
from .grid import BoundarySpec, FluidProperties, GridConfig, build_grid
from .integrator import CoupledProblem, IntegratorConfig

# Scenario runs keep one factorization while it keeps contracting the residual;
# see IntegratorConfig.reuse_factorization.
SCENARIO_INTEGRATOR = dict(reuse_factorization=0.3)

STEADY_TOL = 1e-8
TRANSIENT_FRACTION = 0.3
MIN_PERIODS = 10
PEAK_TO_FLOOR = 10.0
STEADY_LIFT = 1e-3
# disc wake: shedding sets in near Re = 47; kick the inflow above that
RE_SHEDDING = 47.0
PERTURBATION = 0.05


def _positive(name, value):
    if not (value is not None and np.isfinite(value) and value > 0):
        raise ValidationError(f"{name} must be positive, got {value!r}", field=name)


def _spec_dict(spec):
    out = {"kind": spec.kind}
    out.update({f.name: getattr(spec, f.name) for f in fields(spec)})
    return out


# ------------------------------------------------------------------ specs


@dataclass(frozen=True)
class PoiseuilleSpec:
    """Channel of height ``height`` with ``cells`` cells across it.

    ``drive`` is the body force per unit volume (equivalent to ``-dp/dx``).
    ``duration=None`` runs up to forty viscous time scales, stopping early once
    the flow is steady.
    """

    cells: int = 32
    height: float = 1.0
    drive: float = 1.0
    rho: float = 1.0
    mu: float = 1.0
    length_cells: int = 4
    duration: float | None = None
    dt: float | None = None
    output_every: int = 1

    kind = "poiseuille"

    def __post_init__(self):
        if int(self.cells) != self.cells or self.cells < 2:
            raise ValidationError("cells must be an integer >= 2", field="cells")
        if int(self.length_cells) != self.length_cells or self.length_cells < 1:
            raise ValidationError("length_cells must be a positive integer", field="length_cells")
        for name in ("height", "rho", "mu"):
            _positive(name, getattr(self, name))
        if not np.isfinite(self.drive):
            raise ValidationError("drive must be finite", field="drive")
        if self.duration is not None:
            _positive("duration", self.duration)
        if self.dt is not None:
            _positive("dt", self.dt)
        if self.output_every < 1:
            raise ValidationError("output_every must be >= 1", field="output_every")

    @property
    def dy(self):
        return self.height / self.cells

    def time_step(self):
        # a few steps per cell diffusion time, scaled to stay cheap at any resolution
        return self.dt if self.dt is not None else self.rho * self.height * self.dy / (math.pi * self.mu)

    def total_time(self):
        return self.duration if self.duration is not None else 40 * self.rho * self.height**2 / (
            math.pi**2 * self.mu)

    def analytic(self, y):
        return self.drive / (2 * self.mu) * y * (self.height - y)

    def to_dict(self):
        return _spec_dict(self)


@dataclass(frozen=True)
class DiscSpec:
    """Fixed disc of diameter ``diameter`` in a stream ``U`` at Reynolds ``Re``.

    ``mu`` defaults to ``rho U D / Re``; if given it must agree with ``Re``.
    The domain is ``domain`` diameters wide and tall with the disc centre at
    ``center`` (in diameters). Top and bottom carry the free-stream velocity.
    The initial field is uniform. For ``perturb_steps`` steps the inflow
    sides also carry a cross-flow ``perturbation * U`` to trigger shedding.
    By default the kick is 0.05 above the onset of shedding and zero below it,
    where it would only leave a slowly decaying wake oscillation.
    """

    Re: float = 40.0
    diameter: float = 1.0
    U: float = 1.0
    rho: float = 1.0
    mu: float | None = None
    cells: int = 128
    domain: tuple = (15.0, 15.0)
    center: tuple = (5.0, 7.5)
    n_segments: int | None = None
    duration: float = 60.0
    dt: float | None = None
    cfl: float = 1.0
    perturbation: float | None = None
    perturb_steps: int = 100
    output_every: int = 1

    kind = "disc"

    def __post_init__(self):
        for name in ("Re", "diameter", "rho", "duration", "cfl"):
            _positive(name, getattr(self, name))
        if not (np.isfinite(self.U) and self.U >= 0):
            raise ValidationError("U must be finite and non-negative", field="U")
        if int(self.cells) != self.cells or self.cells < 8:
            raise ValidationError("cells must be an integer >= 8", field="cells")
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if len(self.domain) != 2 or len(self.center) != 2:
            raise ValidationError("domain and center take two values", field="domain")
        for v in self.domain:
            _positive("domain", v)
        expected = self.rho * self.U * self.diameter / self.Re
        if self.mu is None:
            if self.U == 0:
                raise ValidationError("mu is required when U = 0", field="mu")
            object.__setattr__(self, "mu", expected)
        else:
            _positive("mu", self.mu)
            if self.U > 0 and not math.isclose(self.mu, expected, rel_tol=1e-6):
                raise ValidationError(
                    f"Re = rho*U*D/mu is violated: rho*U*D/mu = "
                    f"{self.rho * self.U * self.diameter / self.mu:.6g} but Re = {self.Re:g}",
                    field="mu")
        if self.dt is not None:
            _positive("dt", self.dt)
        if self.n_segments is not None and self.n_segments < 3:
            raise ValidationError("n_segments must be >= 3", field="n_segments")
        if self.perturbation is None:
            kick = PERTURBATION if self.Re > RE_SHEDDING else 0.0
            object.__setattr__(self, "perturbation", kick)
        if self.perturb_steps < 0 or self.output_every < 1:
            raise ValidationError("perturb_steps >= 0 and output_every >= 1 required",
                                  field="perturb_steps" if self.perturb_steps < 0 else "output_every")

    @property
    def dx(self):
        return self.domain[0] * self.diameter / self.cells

    @property
    def ny(self):
        return max(1, int(round(self.domain[1] / self.domain[0] * self.cells)))

    @property
    def dy(self):
        return self.domain[1] * self.diameter / self.ny

    def time_step(self):
        if self.dt is not None:
            return self.dt
        speed = self.U if self.U > 0 else 1.0
        return self.cfl * self.dx / speed

    def total_time(self):
        return self.duration

    def to_dict(self):
        return _spec_dict(self)


@dataclass(frozen=True)
class SwimmerSpec:
    """Rectangular body with two fin plates chained behind it on revolute joints.

    The fin angles follow ``phi_1 = A sin(2 pi f t)`` (fin 1 relative to the
    body) and ``phi_2 = A sin(2 pi f t - phase_lag)`` (fin 2 relative to fin 1),
    with the amplitude ramped in over ``ramp_cycles`` periods. Every body is
    neutrally buoyant and gravity is off.
    """

    cells: int = 100
    box: float = 1.0
    body_length: float = 0.16
    body_width: float = 0.06
    fin_length: float = 0.08
    fin_thickness: float | None = None
    amplitude: float = 0.6
    frequency: float = 1.0
    phase_lag: float = math.pi / 2
    ramp_cycles: float = 1.0
    cycles: float = 5.0
    position: tuple = (0.45, 0.5)
    heading: float = 0.0
    rho: float = 1.0
    mu: float = 1e-3
    dt: float | None = None
    steps_per_cycle: int = 100
    output_every: int = 1

    kind = "swimmer"

    def __post_init__(self):
        for name in ("box", "body_length", "body_width", "fin_length", "frequency",
                     "cycles", "rho", "mu"):
            _positive(name, getattr(self, name))
        if int(self.cells) != self.cells or self.cells < 8:
            raise ValidationError("cells must be an integer >= 8", field="cells")
        if not np.isfinite(self.amplitude):
            raise ValidationError("amplitude must be finite", field="amplitude")
        if self.ramp_cycles < 0:
            raise ValidationError("ramp_cycles must be >= 0", field="ramp_cycles")
        if self.fin_thickness is not None:
            _positive("fin_thickness", self.fin_thickness)
        if self.dt is not None:
            _positive("dt", self.dt)
        if self.steps_per_cycle < 1 or self.output_every < 1:
            raise ValidationError("steps_per_cycle and output_every must be >= 1",
                                  field="steps_per_cycle")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    @property
    def dx(self):
        return self.box / self.cells

    @property
    def period(self):
        return 1.0 / self.frequency

    def time_step(self):
        return self.dt if self.dt is not None else self.period / self.steps_per_cycle

    def total_time(self):
        return self.cycles * self.period

    def mirrored(self):
        """The same swimmer with every fin angle negated."""
        return replace(self, amplitude=-self.amplitude)

    def to_dict(self):
        return _spec_dict(self)


SPEC_TYPES = {"poiseuille": PoiseuilleSpec, "disc": DiscSpec, "swimmer": SwimmerSpec}


# --------------------------------------------------------------- scenario


@dataclass
class Scenario:
    """A fully assembled, not yet simulated, run."""

    spec: object
    grid: object
    system: BodySystem
    config: IntegratorConfig
    n_steps: int
    initial_velocity: np.ndarray
    bc_schedule: object = None
    meta: dict = field(default_factory=dict)

    def problem(self):
        return CoupledProblem(self.grid, self.system, self.config, self.bc_schedule)

    def initial_state(self, problem=None):
        problem = problem or self.problem()
        return problem.initial_state(v_fluid=self.initial_velocity)


def _n_steps(spec, h):
    return max(1, int(math.ceil(spec.total_time() / h - 1e-9)))


def _integrator(h, overrides):
    opts = dict(SCENARIO_INTEGRATOR)
    opts.update(overrides or {})
    opts["h"] = h
    return IntegratorConfig(**opts)


def build_poiseuille(spec: PoiseuilleSpec, integrator=None) -> Scenario:
    """Periodic-x channel with walls at ``y = 0`` and ``y = H``."""
    if not isinstance(spec, PoiseuilleSpec):
        raise ConfigurationError("build_poiseuille needs a PoiseuilleSpec")
    dy = spec.dy
    cfg = GridConfig(spec.length_cells, spec.cells, dy, dy,
                     left=BoundarySpec.periodic(), right=BoundarySpec.periodic(),
                     bottom=BoundarySpec.wall(), top=BoundarySpec.wall())
    grid = build_grid(cfg, FluidProperties(spec.rho, spec.mu, (spec.drive / spec.rho, 0.0)))
    h = spec.time_step()
    return Scenario(spec, grid, BodySystem.empty(), _integrator(h, integrator),
                    _n_steps(spec, h), np.zeros(grid.n_dofs))


def build_disc(spec: DiscSpec, integrator=None) -> Scenario:
    """Inflow left, outflow right, free-stream top/bottom, fixed polygonal disc."""
    if not isinstance(spec, DiscSpec):
        raise ConfigurationError("build_disc needs a DiscSpec")
    D, U = spec.diameter, spec.U
    dx, dy = spec.dx, spec.dy
    Lx, Ly = spec.domain[0] * D, spec.domain[1] * D
    cx, cy = spec.center[0] * D, spec.center[1] * D
    r = 0.5 * D
    gaps = {"left": cx - r, "right": Lx - cx - r, "bottom": cy - r, "top": Ly - cy - r}
    need = {"left": 2 * SUPPORT * dx, "right": 2 * SUPPORT * dx,
            "bottom": 2 * SUPPORT * dy, "top": 2 * SUPPORT * dy}
    for side, gap in gaps.items():
        if gap < need[side]:
            raise GeometryError(
                f"disc is {gap:.4g} from the {side} boundary; at least {need[side]:.4g} "
                "(two kernel supports) is required")
    cfg = GridConfig(spec.cells, spec.ny, dx, dy,
                     left=BoundarySpec.inflow(U), right=BoundarySpec.outflow(),
                     bottom=BoundarySpec.inflow(U), top=BoundarySpec.inflow(U))
    grid = build_grid(cfg, FluidProperties(spec.rho, spec.mu))
    n_seg = spec.n_segments or max(8, int(round(math.pi * D / dx)))
    mass = spec.rho * math.pi * r**2
    pose = (cx, cy, 0.0)
    system = BodySystem([RigidBody2D(mass, 0.5 * mass * r**2, pose, name="disc")],
                        [BoundaryMesh.circle(r, n_seg)], [FixedBody(0, pose)])
    h = spec.time_step()
    bc_schedule = None
    if spec.perturbation and spec.perturb_steps and U > 0:
        base = grid.default_bc_table.copy()
        kicked = base.copy()
        kicked[[0, 2, 3], 1] = spec.perturbation * U
        t_off = spec.perturb_steps * h * (1 + 1e-9)
        bc_schedule = _Perturbation(base, kicked, t_off)
    v0 = grid.sample(lambda x, y: (U, 0.0))
    return Scenario(spec, grid, system, _integrator(h, integrator), _n_steps(spec, h), v0,
                    bc_schedule, meta={"n_segments": n_seg})


@dataclass(frozen=True)
class _Perturbation:
    base: np.ndarray
    kicked: np.ndarray
    t_off: float

    def __call__(self, t):
        return self.kicked if t <= self.t_off else self.base


def swimmer_schedules(spec: SwimmerSpec, t_end=None):
    if t_end is None:
        t_end = spec.total_time() + spec.period
    ramp = spec.ramp_cycles * spec.period
    s1 = SinusoidalSchedule(spec.amplitude, spec.frequency, 0.0, 0.0, t_end, ramp)
    s2 = SinusoidalSchedule(spec.amplitude, spec.frequency, -spec.phase_lag, 0.0, t_end, ramp)
    return s1, s2


def swimmer_pose_chain(spec: SwimmerSpec, phi1=0.0, phi2=0.0, base=None):
    """Poses of body, fin 1 and fin 2 for given fin angles, body at ``base``."""
    x, y, th = base if base is not None else (*spec.position, spec.heading)
    Lb, Lf = spec.body_length, spec.fin_length
    p0 = np.array([x, y])
    j1 = p0 + rotation(th) @ np.array([-0.5 * Lb, 0.0])
    th1 = th + phi1
    c1 = j1 + rotation(th1) @ np.array([-0.5 * Lf, 0.0])
    j2 = c1 + rotation(th1) @ np.array([-0.5 * Lf, 0.0])
    th2 = th1 + phi2
    c2 = j2 + rotation(th2) @ np.array([-0.5 * Lf, 0.0])
    return np.array([x, y, th, *c1, th1, *c2, th2])


def build_swimmer(spec: SwimmerSpec, integrator=None) -> Scenario:
    """Free swimmer in a closed box of still fluid."""
    if not isinstance(spec, SwimmerSpec):
        raise ConfigurationError("build_swimmer needs a SwimmerSpec")
    dx = spec.dx
    Lb, Wb, Lf = spec.body_length, spec.body_width, spec.fin_length
    tf = spec.fin_thickness or dx
    s1, s2 = swimmer_schedules(spec)
    _check_sweep(spec)

    rho = spec.rho
    mb = rho * Lb * Wb
    mf = rho * Lf * tf
    q0 = swimmer_pose_chain(spec)
    bodies = [
        RigidBody2D(mb, mb * (Lb**2 + Wb**2) / 12, q0[0:3], name="body"),
        RigidBody2D(mf, mf * (Lf**2 + tf**2) / 12, q0[3:6], name="fin1"),
        RigidBody2D(mf, mf * (Lf**2 + tf**2) / 12, q0[6:9], name="fin2"),
    ]
    fin = BoundaryMesh.line((0.5 * Lf, 0.0), (-0.5 * Lf, 0.0), dx)
    meshes = [BoundaryMesh.rectangle(Lb, Wb, dx), fin, fin]
    constraints = [
        RevoluteJoint(0, 1, (-0.5 * Lb, 0.0), (0.5 * Lf, 0.0)),
        RevoluteJoint(1, 2, (-0.5 * Lf, 0.0), (0.5 * Lf, 0.0)),
        PrescribedAngle(1, 0, s1),
        PrescribedAngle(2, 1, s2),
    ]
    system = BodySystem(bodies, meshes, constraints)
    n = spec.cells
    cfg = GridConfig(n, n, dx, dx)
    grid = build_grid(cfg, FluidProperties(rho, spec.mu, (0.0, 0.0)))
    h = spec.time_step()
    return Scenario(spec, grid, system, _integrator(h, integrator), _n_steps(spec, h),
                    np.zeros(grid.n_dofs))


def _check_sweep(spec):
    """Every boundary point must stay two kernel supports inside the box over the gait."""
    s1, s2 = swimmer_schedules(spec, t_end=math.inf)
    margin = 2 * SUPPORT * spec.dx
    Lb, Wb, Lf = spec.body_length, spec.body_width, spec.fin_length
    ts = np.linspace(spec.ramp_cycles * spec.period, (spec.ramp_cycles + 1) * spec.period, 64)
    body = np.array([[-0.5 * Lb, -0.5 * Wb], [0.5 * Lb, -0.5 * Wb],
                     [0.5 * Lb, 0.5 * Wb], [-0.5 * Lb, 0.5 * Wb]])
    fin = np.array([[0.5 * Lf, 0.0], [-0.5 * Lf, 0.0]])
    for t in ts:
        q = swimmer_pose_chain(spec, s1(t), s2(t))
        pts = [q[:2] + body @ rotation(q[2]).T]
        pts += [q[3 * k : 3 * k + 2] + fin @ rotation(q[3 * k + 2]).T for k in (1, 2)]
        pts = np.vstack(pts)
        if pts.min() < margin or pts.max() > spec.box - margin:
            raise GeometryError(
                f"swimmer sweeps within {margin:.3g} of the walls at t={t:.3g}; "
                "move it inward or shorten the fins")


BUILDERS = {"poiseuille": build_poiseuille, "disc": build_disc, "swimmer": build_swimmer}


def build(spec, integrator=None) -> Scenario:
    return BUILDERS[spec.kind](spec, integrator)


# ----------------------------------------------------------------- running


def run(scenario: Scenario, sinks=(), callback=None, until_steady=None):
    """Simulate up to ``scenario.n_steps`` steps; returns ``(problem, trajectory)``.

    ``until_steady`` stops early once the per-step relative fluid change drops
    below it.
    """
    problem = scenario.problem()
    state = scenario.initial_state(problem)
    traj = problem.simulate(state, scenario.n_steps, sinks, callback, steady_tol=until_steady)
    return problem, traj


# --------------------------------------------------------------- poiseuille


def channel_profile(grid, v_fluid):
    """Cell-row heights and the x-averaged ``u`` across the channel."""
    u, _ = grid.split(v_fluid)
    y = grid.config.origin[1] + (np.arange(grid.ny) + 0.5) * grid.dy
    return y, u[: grid.nx].mean(axis=0)


def profile_error(y, u, spec: PoiseuilleSpec):
    """Relative L2 difference between ``u(y)`` and the analytic parabola."""
    ua = spec.analytic(np.asarray(y, float))
    norm = np.linalg.norm(ua)
    if norm == 0:
        return float(np.linalg.norm(u))
    return float(np.linalg.norm(np.asarray(u, float) - ua) / norm)


def poiseuille_error(trajectory, spec: PoiseuilleSpec, grid=None, steady_tol=STEADY_TOL):
    """Profile error of the final state; raises if the run had not settled."""
    if not trajectory.changes:
        raise SteadinessError("trajectory has no steps")
    last = trajectory.changes[-1]
    if not last < steady_tol:
        raise SteadinessError(
            f"flow not steady: last relative change {last:.3e} >= {steady_tol:.1e}")
    grid = grid or build_poiseuille(spec).grid
    y, u = channel_profile(grid, trajectory.state.v_fluid)
    return profile_error(y, u, spec)


# ------------------------------------------------------------------- forces


@dataclass
class ForceHistory:
    """Uniformly sampled ``(Fx, Fy, torque)`` per body."""

    times: np.ndarray
    forces: np.ndarray  # (n_samples, n_bodies, 3)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.forces = np.asarray(self.forces, float)
        if self.forces.ndim == 2:
            self.forces = self.forces[:, None, :]
        if len(self.times) != len(self.forces):
            raise HistoryError("times and forces differ in length")
        if len(self.times) > 2:
            dt = np.diff(self.times)
            if not np.allclose(dt, dt[0], rtol=1e-6, atol=0):
                raise HistoryError("force history is not uniformly sampled")

    @classmethod
    def from_trajectory(cls, trajectory, every=1):
        t = np.asarray(trajectory.times)[every - 1 :: every]
        f = np.asarray(trajectory.forces)[every - 1 :: every]
        return cls(t, f)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class AeroCoefficients:
    drag: float
    lift_amplitude: float
    strouhal: float | None
    steady: bool
    peak_to_floor: float
    periods: float
    lift_mean: float = 0.0

    def to_dict(self):
        return asdict(self)


def dominant_frequency(signal, dt):
    """Frequency of the largest Hann-windowed spectral peak.

    Returns ``(f, peak / median)``; the peak location is refined by a
    parabola through the log magnitudes of the three bins around it.
    """
    x = np.asarray(signal, float)
    n = len(x)
    if n < 8:
        raise HistoryError("need at least 8 samples for a spectrum")
    spec = np.abs(np.fft.rfft((x - x.mean()) * np.hanning(n)))
    mag = spec[1:]
    k = int(np.argmax(mag)) + 1
    floor = float(np.median(mag))
    ratio = float(spec[k] / floor) if floor > 0 else math.inf
    shift = 0.0
    if 1 <= k < len(spec) - 1 and min(spec[k - 1], spec[k], spec[k + 1]) > 0:
        a, b, c = np.log(spec[k - 1 : k + 2])
        den = a - 2 * b + c
        if den < 0:
            shift = 0.5 * (a - c) / den
    return (k + shift) / (n * dt), ratio


def aero_coefficients(history: ForceHistory, spec: DiscSpec, body=0,
                      transient=TRANSIENT_FRACTION, min_periods=MIN_PERIODS):
    """Drag, lift amplitude and Strouhal number of a disc force history.

    The first ``transient`` fraction is dropped. A flow counts as steady when
    the lift spectrum has no peak ten times above its median or the lift
    amplitude is below ``1e-3``; then drag is the mean of the last tenth
    (the converged value) and the Strouhal number is ``None``.
    """
    if spec.U <= 0:
        raise ConfigurationError("coefficients are undefined for U = 0")
    q = 0.5 * spec.rho * spec.U**2 * spec.diameter
    n = len(history.times)
    start = int(math.floor(transient * n))
    t = history.times[start:]
    fx = history.forces[start:, body, 0]
    fy = history.forces[start:, body, 1]
    if len(t) < 8:
        raise HistoryError(f"only {len(t)} samples after the transient")
    dt = history.dt
    cl = fy / q
    amp = 0.5 * float(cl.max() - cl.min())
    freq, ratio = dominant_frequency(fy, dt)
    span = len(t) * dt
    steady = ratio < PEAK_TO_FLOOR or amp < STEADY_LIFT
    if steady:
        tail = fx[-max(1, len(fx) // 10):]
        return AeroCoefficients(float(tail.mean() / q), amp, None, True, ratio,
                                0.0, float(cl.mean()))
    periods = freq * span
    if periods < min_periods:
        raise HistoryError(
            f"history covers {periods:.1f} shedding periods after the transient; "
            f"{min_periods} are required")
    return AeroCoefficients(float(fx.mean() / q), amp, float(freq * spec.diameter / spec.U),
                            False, ratio, float(periods), float(cl.mean()))


# ------------------------------------------------------------------ swimmer


def axial_displacement(poses, spec: SwimmerSpec):
    """Body displacement along its initial heading, one value per pose row."""
    poses = np.asarray(poses, float).reshape(len(poses), -1)
    axis = np.array([math.cos(spec.heading), math.sin(spec.heading)])
    return (poses[:, :2] - np.asarray(spec.position)) @ axis


def cycle_displacements(times, poses, spec: SwimmerSpec):
    """Axial displacement at the end of every completed gait cycle."""
    times = np.asarray(times, float)
    d = axial_displacement(poses, spec)
    out = []
    for c in range(1, int(math.floor(times[-1] / spec.period + 1e-9)) + 1):
        k = int(np.argmin(np.abs(times - c * spec.period)))
        out.append(d[k])
    return np.array(out)


def mirror_poses(poses, spec: SwimmerSpec):
    """Reflect stacked poses across the initial body axis."""
    poses = np.array(poses, float)
    flat = poses.reshape(-1, 3)
    p0 = np.asarray(spec.position)
    a = np.array([math.cos(spec.heading), math.sin(spec.heading)])
    rel = flat[:, :2] - p0
    along = rel @ a
    flat[:, :2] = p0 + 2 * along[:, None] * a - rel
    flat[:, 2] = 2 * spec.heading - flat[:, 2]
    return flat.reshape(poses.shape)
