"""Command-line front end: ``varfsi run|bench|validate``.

Configs are TOML with a ``[scenario]`` table (``kind`` plus the fields of the
matching spec class), optional ``[integrator]`` and ``[output]`` tables and an
optional top-level ``seed``. Failures exit nonzero and print one line::

    varfsi-error {"category": "...", "message": "...", ...}
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import scenarios as sc
from .errors import (HistoryError, ParseError, UsageError, ValidationError, VarFSIError)
from .output import CsvSeries, write_json, write_vtk

INTEGRATOR_KEYS = {
    "newton_tol": "newton_tol",
    "max_iters": "max_newton_iters",
    "max_newton_iters": "max_newton_iters",
    "min_newton_iters": "min_newton_iters",
    "dual_regularization": "dual_regularization",
    "pressure_gauge": "pressure_gauge",
    "convection": "convection",
    "coupling": "coupling",
    "quadrature_order": "quadrature_order",
    "max_backtracks": "max_backtracks",
    "reuse_factorization": "reuse_factorization",
}
INTEGRATOR_DEFAULTS = {"newton_tol": 1e-8, "max_newton_iters": 50, **sc.SCENARIO_INTEGRATOR}
OUTPUT_KEYS = ("dir", "snapshot_every")
DEFAULT_SNAPSHOT_EVERY = 100
PAPER_SCALE_CELLS = 250
# reflection error allowed between a gait and its mirror image (m)
MIRROR_TOL = 1e-8

UNITS = {
    "cells": "1", "length_cells": "1", "height": "m", "drive": "N/m^3", "rho": "kg/m^3",
    "mu": "Pa s", "duration": "s", "dt": "s", "output_every": "steps", "Re": "1",
    "diameter": "m", "U": "m/s", "domain": "diameters", "center": "diameters",
    "n_segments": "1", "cfl": "1", "perturbation": "U", "perturb_steps": "steps",
    "box": "m", "body_length": "m", "body_width": "m", "fin_length": "m",
    "fin_thickness": "m", "amplitude": "rad", "frequency": "Hz", "phase_lag": "rad",
    "ramp_cycles": "cycles", "cycles": "cycles", "position": "m", "heading": "rad",
    "steps_per_cycle": "steps", "kind": "",
}

EXIT_CODES = {
    "usage": 2, "parse": 3, "validation": 4, "configuration": 4, "geometry": 5, "mesh": 5,
    "coupling": 5, "scheduling": 5, "nonconvergence": 6, "singularity": 6, "steadiness": 7,
    "history": 7, "benchmark": 8, "io": 9,
}


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    scenario: object
    integrator: dict = field(default_factory=dict)
    output_dir: Path = Path("varfsi-output")
    snapshot_every: int = DEFAULT_SNAPSHOT_EVERY
    seed: int = 0

    def __post_init__(self):
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 1:
            raise ValidationError("snapshot_every must be an integer >= 1", field="snapshot_every")
        self.output_dir = Path(self.output_dir)

    def canonical(self):
        """Everything that determines the outputs (the output directory does not)."""
        return {
            "scenario": self.scenario.to_dict(),
            "integrator": dict(sorted(self.integrator.items())),
            "snapshot_every": self.snapshot_every,
            "seed": self.seed,
        }

    @property
    def digest(self):
        text = json.dumps(self.canonical(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def scenario_id(self):
        return f"{self.scenario.kind}-{self.digest[:12]}"


def parse_config(text, base_dir=None) -> RunConfig:
    """Parse and validate TOML config text."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(msg, line=line) from None
    return config_from_dict(data, base_dir)


def config_from_dict(data, base_dir=None) -> RunConfig:
    data = dict(data)
    unknown = set(data) - {"scenario", "integrator", "output", "seed"}
    if unknown:
        key = sorted(unknown)[0]
        raise ValidationError(f"unknown key {key!r}", field=key)
    scen = data.get("scenario")
    if not isinstance(scen, dict):
        raise ValidationError("missing [scenario] table", field="scenario")
    scen = dict(scen)
    kind = scen.pop("kind", None)
    if kind not in sc.SPEC_TYPES:
        raise ValidationError(f"scenario.kind must be one of {sorted(sc.SPEC_TYPES)}, got {kind!r}",
                              field="scenario.kind")
    cls = sc.SPEC_TYPES[kind]
    names = {f.name for f in dataclasses.fields(cls)}
    for key in scen:
        if key not in names:
            raise ValidationError(f"unknown key 'scenario.{key}'", field=f"scenario.{key}")
    try:
        spec = cls(**scen)
    except ValidationError as exc:
        raise ValidationError(str(exc), field=f"scenario.{exc.field}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"scenario: {exc}", field="scenario") from None

    integ = dict(INTEGRATOR_DEFAULTS)
    for key, value in dict(data.get("integrator", {})).items():
        if key not in INTEGRATOR_KEYS:
            raise ValidationError(f"unknown key 'integrator.{key}'", field=f"integrator.{key}")
        integ[INTEGRATOR_KEYS[key]] = value
    try:
        sc.IntegratorConfig(h=1.0, **integ)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"integrator: {exc}", field="integrator") from None

    out = dict(data.get("output", {}))
    for key in out:
        if key not in OUTPUT_KEYS:
            raise ValidationError(f"unknown key 'output.{key}'", field=f"output.{key}")
    out_dir = Path(out.get("dir", "varfsi-output"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = Path(base_dir) / out_dir
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValidationError("seed must be an integer", field="seed")
    return RunConfig(spec, integ, out_dir, out.get("snapshot_every", DEFAULT_SNAPSHOT_EVERY), seed)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _IOError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=None)


def with_overrides(cfg: RunConfig, output_dir=None, snapshot_every=None, paper_scale=False):
    spec = cfg.scenario
    if paper_scale and spec.kind == "disc":
        spec = dataclasses.replace(spec, cells=PAPER_SCALE_CELLS)
    return RunConfig(
        spec, dict(cfg.integrator),
        Path(output_dir) if output_dir is not None else cfg.output_dir,
        snapshot_every if snapshot_every is not None else cfg.snapshot_every,
        cfg.seed)


class _IOError(VarFSIError, OSError):
    category = "io"


# --------------------------------------------------------------------- run


@dataclass
class RunReport:
    scenario_id: str
    kind: str
    config_sha256: str
    wall_clock: float
    steps: int
    t_final: float
    newton: dict
    metrics: dict
    parameters: dict
    files: list
    output_dir: Path = None
    # stacked body poses after every step, kept in memory only
    pose_history: np.ndarray = None

    def to_dict(self, timing=True):
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
             if f.name not in ("output_dir", "pose_history")}
        if not timing:
            d.pop("wall_clock")
        return d


def _parameters(spec):
    out = {}
    for key, value in spec.to_dict().items():
        if key == "kind":
            continue
        out[key] = {"value": list(value) if isinstance(value, tuple) else value,
                    "unit": UNITS.get(key, "")}
    return out


def run(cfg: RunConfig, log=None) -> RunReport:
    """Execute one configured scenario and write its outputs."""
    t_start = time.perf_counter()
    spec = cfg.scenario
    scenario = sc.build(spec, {k: v for k, v in cfg.integrator.items()})
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _IOError(f"cannot create {out}: {exc.strerror}") from None
    digest = cfg.digest
    grid, system = scenario.grid, scenario.system
    problem = scenario.problem()
    state = scenario.initial_state(problem)
    h = scenario.config.h
    every = spec.output_every
    names = [b.name or f"body{k}" for k, b in enumerate(system.bodies)]

    files = []
    sinks = []
    energy = CsvSeries(out / "energy.csv",
                       [("step", "1"), ("t", "s"), ("kinetic_energy", "J/m"),
                        ("divergence_inf", "m^2/s"), ("newton_iters", "1"),
                        ("residual_inf", "mixed")], digest, cfg.scenario_id)
    files.append("energy.csv")
    sinks.append(lambda rec: rec[0] % every == 0 and energy(rec[:6]))
    forces = None
    if system.n_bodies:
        cols = [("step", "1"), ("t", "s")]
        for n in names:
            cols += [(f"{n}_Fx", "N/m"), (f"{n}_Fy", "N/m"), (f"{n}_Tz", "N")]
        forces = CsvSeries(out / "forces.csv", cols, digest, cfg.scenario_id)
        files.append("forces.csv")
        sinks.append(lambda rec: rec[0] % every == 0 and forces((rec[0], rec[1], *rec[6:])))
    traj_out = None
    if spec.kind == "swimmer":
        cols = [("step", "1"), ("t", "s")]
        for n in names:
            cols += [(f"{n}_x", "m"), (f"{n}_y", "m"), (f"{n}_theta", "rad")]
        cols.append(("axial_displacement", "m"))
        traj_out = CsvSeries(out / "trajectory.csv", cols, digest, cfg.scenario_id)
        files.append("trajectory.csv")
        traj_out((0, state.t, *state.poses, 0.0))

    n_snap = 0

    def snapshot(k, sol):
        nonlocal n_snap
        name = f"snapshot_{k:06d}.vtk"
        write_vtk(out / name, grid, sol.v_fluid, sol.p / h,
                  grid.vorticity(sol.v_fluid, problem.table(sol.t)), digest, k, sol.t)
        files.append(name)
        n_snap += 1

    last = {"k": 0, "sol": None}

    def callback(k, sol):
        last["k"], last["sol"] = k, sol
        if traj_out is not None and k % every == 0:
            traj_out((k, sol.t, *sol.poses, float(sc.axial_displacement(sol.poses[None, :3], spec)[0])))
        if k % cfg.snapshot_every == 0:
            snapshot(k, sol)
        if log is not None and k % max(1, scenario.n_steps // 20) == 0:
            log(f"  step {k}/{scenario.n_steps} t={sol.t:.4g} newton={sol.newton_iters}")
        return False

    until = sc.STEADY_TOL if spec.kind == "poiseuille" else None
    try:
        traj = problem.simulate(state, scenario.n_steps, sinks, callback, steady_tol=until)
    finally:
        for w in (energy, forces, traj_out):
            if w is not None:
                w.close()
    if last["k"] % cfg.snapshot_every != 0:
        snapshot(last["k"], last["sol"])

    metrics = _metrics(spec, scenario, traj, out, digest, cfg.scenario_id, files)
    iters = np.array([r[4] for r in traj.records])
    report = RunReport(
        cfg.scenario_id, spec.kind, digest, time.perf_counter() - t_start, len(traj.records),
        float(traj.times[-1]),
        {"mean_iters": float(iters.mean()), "max_iters": int(iters.max()),
         "total_iters": int(iters.sum()), "factorizations": int(problem.n_factorizations)},
        metrics, _parameters(spec), sorted(files + ["report.json"]), out,
        traj.pose_history())
    write_json(out / "report.json", report.to_dict(timing=False))
    write_json(out / "timing.json", {"wall_clock_s": report.wall_clock})
    return report


def _metrics(spec, scenario, traj, out, digest, title, files):
    if spec.kind == "poiseuille":
        y, u = sc.channel_profile(scenario.grid, traj.state.v_fluid)
        with CsvSeries(out / "profile.csv", [("y", "m"), ("u", "m/s"), ("u_analytic", "m/s")],
                       digest, title) as w:
            for row in zip(y, u, spec.analytic(y)):
                w(row)
        files.append("profile.csv")
        return {"profile_error": sc.poiseuille_error(traj, spec, scenario.grid),
                "steady_change": float(traj.changes[-1])}
    if spec.kind == "disc":
        hist = sc.ForceHistory.from_trajectory(traj, spec.output_every)
        try:
            return sc.aero_coefficients(hist, spec).to_dict()
        except HistoryError as exc:
            q = 0.5 * spec.rho * spec.U**2 * spec.diameter
            return {"drag_last": float(hist.forces[-1, 0, 0] / q) if q > 0 else 0.0,
                    "note": str(exc)}
    poses = traj.pose_history()[:, :3]
    disp = sc.axial_displacement(poses, spec)
    cyc = sc.cycle_displacements(traj.times, poses, spec)
    return {"displacement": float(disp[-1]), "cycle_displacements": [float(c) for c in cyc],
            "max_lateral": float(np.abs(poses[:, 1] - spec.position[1]).max())}


# ------------------------------------------------------------------- bench

PAPER_REFERENCE = {
    "disc-re40": {"C_d": 1.68},
    "disc-re100": {"C_d": 1.439, "C_d_spread": 0.009, "C_l": 0.351, "St": 0.164},
    "swimmer-demo": {"hardware_rmse_cm": 0.89},
}


def suite_configs(suite, paper_scale=False):
    """Named member configs of a benchmark suite."""
    disc_cells = PAPER_SCALE_CELLS if paper_scale else 128
    if suite == "poiseuille-convergence":
        return {f"cells{n}": sc.PoiseuilleSpec(cells=n) for n in (8, 16, 32)}
    if suite == "disc-re40":
        return {"re40": sc.DiscSpec(Re=40, cells=disc_cells, duration=60.0)}
    if suite == "disc-re100":
        return {"re100": sc.DiscSpec(Re=100, cells=disc_cells, duration=150.0)}
    if suite == "swimmer-demo":
        base = sc.SwimmerSpec()
        return {"forward": base, "mirrored": base.mirrored(),
                "still": dataclasses.replace(base, amplitude=0.0)}
    raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


SUITES = ("poiseuille-convergence", "disc-re40", "disc-re100", "swimmer-demo")


@dataclass
class BenchRow:
    member: str
    metric: str
    value: float
    lower: float | None
    upper: float | None
    reference: str
    passed: bool

    def cells(self):
        bound = lambda b: "" if b is None else f"{b:.6g}"
        return [self.member, self.metric, f"{self.value:.6g}", bound(self.lower), bound(self.upper),
                self.reference, "pass" if self.passed else "FAIL"]


def _row(member, metric, value, lower=None, upper=None, reference=""):
    ok = (lower is None or value >= lower) and (upper is None or value <= upper)
    return BenchRow(member, metric, float(value), lower, upper, reference, bool(ok))


def bench(suite, output_dir=Path("varfsi-bench"), paper_scale=False, snapshot_every=None,
          log=None):
    """Run every member of ``suite`` and compare with reference values."""
    members = suite_configs(suite, paper_scale)
    root = Path(output_dir) / suite
    reports = {}
    for name, spec in members.items():
        cfg = RunConfig(spec, dict(INTEGRATOR_DEFAULTS), root / name,
                        snapshot_every or 10**9)
        if log:
            log(f"[{suite}] {name}: {cfg.scenario_id}")
        try:
            reports[name] = run(cfg, log=log)
        except VarFSIError as exc:
            exc.args = (f"suite {suite}, member {name}: {exc.args[0]}",)
            raise
    rows = _compare(suite, reports, members, paper_scale)
    payload = {"suite": suite, "paper_scale": paper_scale,
               "rows": [dataclasses.asdict(r) for r in rows],
               "members": {k: r.to_dict(timing=False) for k, r in reports.items()},
               "passed": all(r.passed for r in rows)}
    write_json(root / "bench.json", payload)
    header = ["member", "metric", "value", "lower", "upper", "reference", "status"]
    lines = [",".join(header)] + [",".join(r.cells()) for r in rows]
    (root / "bench.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows, reports


def _compare(suite, reports, members, paper_scale):
    rows = []
    if suite == "poiseuille-convergence":
        errs = [reports[k].metrics["profile_error"] for k in ("cells8", "cells16", "cells32")]
        for k, e in zip((8, 16, 32), errs):
            rows.append(_row(f"cells{k}", "profile_error", e,
                             upper=0.02 if k == 32 else None, reference="analytic parabola"))
        for (a, b), (ea, eb) in zip(((8, 16), (16, 32)), zip(errs, errs[1:])):
            rows.append(_row(f"cells{a}/{b}", "error_ratio", ea / eb, lower=3.5,
                             reference="second order"))
            rows.append(_row(f"cells{a}/{b}", "order", math.log2(ea / eb), reference="2"))
        for k in ("cells8", "cells16", "cells32"):
            rows.append(_row(k, "wall_clock_s", reports[k].wall_clock, upper=60.0))
    elif suite == "disc-re40":
        m = reports["re40"].metrics
        ref = PAPER_REFERENCE[suite]["C_d"]
        lo, hi = (ref - 0.10, ref + 0.10) if paper_scale else (1.50, 1.90)
        rows.append(_row("re40", "C_d", m.get("drag", math.nan), lo, hi, f"{ref}"))
        rows.append(_row("re40", "steady", float(m.get("steady", False)), 1.0, 1.0, "steady wake"))
        if not paper_scale:
            rows.append(_row("re40", "wall_clock_s", reports["re40"].wall_clock, upper=900.0))
    elif suite == "disc-re100":
        m = reports["re100"].metrics
        ref = PAPER_REFERENCE[suite]
        st = m.get("strouhal") or math.nan
        if paper_scale:
            rows.append(_row("re100", "St", st, ref["St"] - 0.02, ref["St"] + 0.02, f"{ref['St']}"))
            rows.append(_row("re100", "C_d", m.get("drag", math.nan), ref["C_d"] - 0.15,
                             ref["C_d"] + 0.15, f"{ref['C_d']} +/- {ref['C_d_spread']}"))
            rows.append(_row("re100", "C_l_amplitude", m.get("lift_amplitude", math.nan),
                             ref["C_l"] - 0.10, ref["C_l"] + 0.10, f"+/-{ref['C_l']}"))
        else:
            rows.append(_row("re100", "St", st, 0.14, 0.19, f"{ref['St']}"))
            rows.append(_row("re100", "C_d", m.get("drag", math.nan),
                             reference=f"{ref['C_d']} +/- {ref['C_d_spread']}"))
            rows.append(_row("re100", "C_l_amplitude", m.get("lift_amplitude", math.nan),
                             reference=f"+/-{ref['C_l']}"))
        rows.append(_row("re100", "peak_to_floor", m.get("peak_to_floor", 0.0), lower=10.0,
                         reference="dominant shedding peak"))
    elif suite == "swimmer-demo":
        spec = members["forward"]
        tol = INTEGRATOR_DEFAULTS["newton_tol"]
        rows.append(_row("forward", "displacement", reports["forward"].metrics["displacement"],
                         lower=1e-12, reference="> 0 along the body axis"))
        rows.append(_row("still", "abs_displacement",
                         abs(reports["still"].metrics["displacement"]), upper=10 * tol,
                         reference="<= 10 newton_tol"))
        fwd = reports["forward"].pose_history
        mir = reports["mirrored"].pose_history
        mirror_err = float(np.abs(sc.mirror_poses(fwd, spec) - mir).max())
        rows.append(_row("mirrored", "mirror_error_m", mirror_err, upper=MIRROR_TOL,
                         reference="reflection of the forward run"))
        rows.append(BenchRow("forward", "hardware_rmse_cm", math.nan, None, None,
                             "0.89 cm; needs the physical robot, not reproduced", True))
    return rows


# -------------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    p = _Parser(prog="varfsi", description="Monolithic fluid/rigid-body simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    common = _Parser(add_help=False)
    common.add_argument("--output-dir", type=Path, default=None,
                        help="directory for CSV/VTK/JSON outputs")
    common.add_argument("--snapshot-every", type=int, default=None,
                        help="write a VTK snapshot every N steps")
    common.add_argument("--paper-scale", action="store_true",
                        help="use the 250x250 disc grid (long-running)")
    r = sub.add_parser("run", parents=[common], help="run one config")
    r.add_argument("config", type=Path)
    b = sub.add_parser("bench", parents=[common], help="run a benchmark suite")
    b.add_argument("suite", help=" | ".join(SUITES))
    v = sub.add_parser("validate", parents=[common], help="check a config without running it")
    v.add_argument("config", type=Path)
    return p


def _fail(exc):
    category = getattr(exc, "category", "error")
    payload = {"category": category, "message": str(exc)}
    for key in ("field", "line", "step", "block"):
        val = getattr(exc, key, None)
        if val is not None:
            payload[key] = val
    print("varfsi-error " + json.dumps(payload, sort_keys=True), file=sys.stderr)
    return EXIT_CODES.get(category, 1)


def main(argv=None):
    log = lambda msg: print(msg, file=sys.stderr, flush=True)
    try:
        args = _parser().parse_args(argv)
        if args.snapshot_every is not None and args.snapshot_every < 1:
            raise ValidationError("--snapshot-every must be >= 1", field="snapshot_every")
        if args.command == "bench":
            if args.suite not in SUITES:
                raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
            rows, _ = bench(args.suite, args.output_dir or Path("varfsi-bench"),
                            args.paper_scale, args.snapshot_every, log)
            widths = [10, 20, 14, 10, 10, 44, 6]
            head = ["member", "metric", "value", "lower", "upper", "reference", "status"]
            print("  ".join(h.ljust(w) for h, w in zip(head, widths)))
            for row in rows:
                print("  ".join(c.ljust(w) for c, w in zip(row.cells(), widths)))
            if not all(r.passed for r in rows):
                failed = ", ".join(f"{r.member}:{r.metric}" for r in rows if not r.passed)
                return _fail(_BenchmarkFailure(f"suite {args.suite} out of tolerance: {failed}"))
            return 0
        cfg = with_overrides(load_config(args.config), args.output_dir, args.snapshot_every,
                             args.paper_scale)
        if args.command == "validate":
            scenario = sc.build(cfg.scenario, cfg.integrator)
            print(json.dumps({
                "scenario_id": cfg.scenario_id, "config_sha256": cfg.digest,
                "kind": cfg.scenario.kind, "steps": scenario.n_steps, "dt_s": scenario.config.h,
                "parameters": _parameters(cfg.scenario), "integrator": cfg.integrator,
            }, indent=2, sort_keys=True, default=list))
            return 0
        report = run(cfg, log=log)
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return 0
    except VarFSIError as exc:
        return _fail(exc)
    except OSError as exc:
        return _fail(_IOError(str(exc)))


class _BenchmarkFailure(VarFSIError):
    category = "benchmark"


if __name__ == "__main__":
    sys.exit(main())
