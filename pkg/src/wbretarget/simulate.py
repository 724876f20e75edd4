"""Scenario runner, independent fixed-point oracle and trace verification.

A scenario drives the command pipeline and the retargeting loop at a
fixed tick rate — under the quasi-static assumption the desired
configuration *is* the predicted robot state, so no forward dynamics is
involved.  Traces are JSONL: a metadata header line followed by one
record per tick.  ``oracle_solve`` recomputes fixed points with
numerically-differentiated nonlinear least squares, sharing neither the
analytic derivatives nor the QP solver with the main path.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .contacts import (
    ContactEntry,
    ContactSet,
    ContactSpec,
    ContactState,
    ENABLED,
    RAMPING_OUT,
)
from .geometry import Pose, Wrench, pose_error_log, pose_integrate, Twist
from .model import Configuration, Kinematics, RobotModel, parse_robot_description
from .pipeline import (
    AdmittanceParams,
    AdmittanceState,
    FilterParams,
    FilterState,
    admittance_tick,
    compose_command,
    filter_tick,
)
from .qpsolver import OPTIMAL
from .resources import fixture_text
from .retarget import (
    EffectorCommand,
    RetargetConfig,
    begin_contact_switch,
    converge,
    initial_state,
    step,
)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # set_target | switch | external_wrench
    frame: str
    pose: Pose | None = None
    action: str | None = None  # switch: add | remove
    duration: float = 2.0  # switch ramp / wrench hold time
    wrench: Wrench | None = None


@dataclass(frozen=True)
class Scenario:
    model_file: str
    duration: float = 5.0
    rate: float = 200.0
    initial_base_pose: Pose | None = None
    initial_joint_positions: list | None = None
    contacts: tuple = ()  # (ContactSpec, enabled: bool) pairs
    retarget: RetargetConfig = field(default_factory=RetargetConfig)
    filter: FilterParams = field(default_factory=FilterParams)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    events: tuple = ()

    def __post_init__(self):
        if self.duration <= 0.0 or self.rate <= 0.0:
            raise ScenarioError("duration and rate must be > 0")
        ts = [e.t for e in self.events]
        if ts != sorted(ts):
            raise ScenarioError("events must be time-sorted")


def load_model(model_file: str) -> RobotModel:
    """Resolve a scenario model reference: shipped fixture name or path."""
    try:
        text = fixture_text(model_file)
    except FileNotFoundError:
        with open(model_file) as f:
            text = f.read()
    return parse_robot_description(text)


def scenario_from_dict(d: dict) -> Scenario:
    try:
        events = []
        for e in d.get("events", ()):
            events.append(
                Event(
                    t=float(e["t"]),
                    kind=e["event"],
                    frame=e["frame"],
                    pose=Pose.from_flat(e["pose"]) if "pose" in e else None,
                    action=e.get("action"),
                    duration=float(e.get("duration", 2.0)),
                    wrench=Wrench(force=e["wrench"][:3], torque=e["wrench"][3:])
                    if "wrench" in e
                    else None,
                )
            )
        contacts = []
        for c in d.get("contacts", ()):
            spec = ContactSpec(
                frame=c["frame"],
                kind=c.get("kind", "plane"),
                friction=c.get("friction", 0.5),
                cop_half_extents=tuple(c.get("cop_half_extents", (0.05, 0.05))),
                torsion_friction=c.get("torsion_friction", 0.05),
                f_min=c.get("f_min", 0.0),
                f_max=c.get("f_max", 1000.0),
            )
            contacts.append((spec, bool(c.get("enabled", True))))
        return Scenario(
            model_file=d["model"],
            duration=float(d.get("duration", 5.0)),
            rate=float(d.get("rate", 200.0)),
            initial_base_pose=Pose.from_flat(d["initial"]["base_pose"])
            if "initial" in d and "base_pose" in d["initial"]
            else None,
            initial_joint_positions=d.get("initial", {}).get("joint_positions"),
            contacts=tuple(contacts),
            retarget=RetargetConfig(**d.get("retarget", {})),
            filter=FilterParams(**d.get("filter", {})),
            admittance=AdmittanceParams(**d.get("admittance", {})),
            events=tuple(events),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def load_scenario(path: str) -> Scenario:
    with open(path) as f:
        return scenario_from_dict(json.load(f))


@dataclass
class Trace:
    meta: dict
    records: list

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.meta, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "Trace":
        lines = [l for l in text.splitlines() if l.strip()]
        if not lines:
            raise ScenarioError("empty trace")
        return Trace(meta=json.loads(lines[0]), records=[json.loads(l) for l in lines[1:]])

    def canonical_bytes(self) -> bytes:
        """Serialization with wall-clock measurements stripped; two runs of
        the same scenario must agree on this byte-for-byte."""
        out = [json.dumps(self.meta, sort_keys=True)]
        for r in self.records:
            r = dict(r)
            r.pop("solve_us", None)
            out.append(json.dumps(r, sort_keys=True))
        return ("\n".join(out) + "\n").encode()


def _initial_configuration(model: RobotModel, s: Scenario) -> Configuration:
    base = s.initial_base_pose if s.initial_base_pose is not None else Pose.identity()
    q = (
        np.asarray(s.initial_joint_positions, dtype=float)
        if s.initial_joint_positions is not None
        else np.zeros(model.n)
    )
    return Configuration(base_pose=base, joint_positions=q)


def run_scenario(s: Scenario, model: RobotModel | None = None) -> Trace:
    if model is None:
        model = load_model(s.model_file)
    known = set(model.frame_names())
    for e in s.events:
        if e.frame not in known:
            raise ScenarioError(f"event references unknown frame '{e.frame}'")
    contacts = ContactSet(
        [
            ContactEntry(spec, ContactState(phase=ENABLED if enabled else "disabled"))
            for spec, enabled in s.contacts
        ]
    )
    state = initial_state(model, contacts, _initial_configuration(model, s))
    dt = 1.0 / s.rate
    # settle the wrench distribution before the timeline starts so every
    # recorded tick is at equilibrium; without contacts there is nothing
    # to settle (and the posture pull would drift the start configuration)
    if contacts.wrench_dim:
        state = converge(model, state, [], replace(s.retarget, dt=dt), tol=1e-8, max_iters=300)
        state = replace(state, time=0.0)
    n_ticks = int(round(s.duration * s.rate))
    targets: dict[str, Pose] = {}
    filters: dict[str, FilterState] = {}
    adms: dict[str, AdmittanceState] = {}
    pushes: list = []  # (frame, Wrench, t_end)
    pending = list(s.events)
    records = []

    def track(frame: str, kin: Kinematics):
        if frame not in filters:
            here = kin.pose_of(frame)
            targets[frame] = here
            filters[frame] = FilterState(filtered=here, params=s.filter)
            adms[frame] = AdmittanceState(params=s.admittance)

    t = 0.0
    for _ in range(n_ticks):
        kin = state.kin if state.kin is not None else Kinematics(model, state.cfg)
        while pending and pending[0].t <= t + 1e-12:
            e = pending.pop(0)
            if e.kind == "set_target":
                track(e.frame, kin)
                targets[e.frame] = e.pose
            elif e.kind == "switch":
                state = begin_contact_switch(model, state, e.frame, e.action, e.duration)
            elif e.kind == "external_wrench":
                track(e.frame, kin)
                pushes.append((e.frame, e.wrench, e.t + e.duration))
            else:
                raise ScenarioError(f"unknown event kind '{e.kind}'")
        pushes = [p for p in pushes if p[2] > t]
        commands = []
        for frame in filters:
            f_sum = np.zeros(3)
            tau_sum = np.zeros(3)
            for pframe, w, _ in pushes:
                if pframe == frame:
                    f_sum += w.force
                    tau_sum += w.torque
            adms[frame] = admittance_tick(adms[frame], Wrench(force=f_sum, torque=tau_sum), dt)
            filters[frame] = filter_tick(filters[frame], targets[frame], dt)
            commands.append(EffectorCommand(frame, compose_command(filters[frame].filtered, adms[frame])))
        t0 = time.perf_counter()
        state = step(model, state, commands, replace(s.retarget, dt=dt))
        solve_us = (time.perf_counter() - t0) * 1e6
        t += dt
        kin2 = state.kin if state.kin is not None else Kinematics(model, state.cfg)
        records.append(
            {
                "t": round(t, 9),
                "base_pose": state.cfg.base_pose.flat(),
                "joints": state.cfg.joint_positions.tolist(),
                "lam": np.asarray(state.lam).tolist(),
                "tau": np.asarray(state.torques).tolist(),
                "margins": [[f, n, float(v)] for f, n, v in state.margins],
                "residual": float(np.linalg.norm(state.base_residual)),
                "effectors": {f: kin2.pose_of(f).flat() for f in filters},
                "contacts": [
                    [e.spec.frame, e.state.phase, float(state.lam[off + 2])]
                    for e, off, _ in state.contacts.layout()
                ],
                "status": state.solver_status,
                "solve_us": solve_us,
            }
        )
    meta = {
        "model": s.model_file,
        "rate": s.rate,
        "duration": s.duration,
        "joint_lower": model.joint_lower.tolist(),
        "joint_upper": model.joint_upper.tolist(),
        "effort_max": model.joint_effort_max.tolist(),
        "total_weight": model.total_mass * 9.81,
    }
    return Trace(meta=meta, records=records)


# -- independent fixed-point oracle ------------------------------------


@dataclass(frozen=True)
class OracleResult:
    cfg: Configuration
    lam: np.ndarray
    converged: bool
    residual: float


def oracle_solve(
    model: RobotModel,
    contacts: ContactSet,
    commands,
    cfg0: Configuration,
    tol: float = 1e-10,
) -> OracleResult:
    """Fixed point by damped nonlinear least squares with numerical Jacobians.

    Unknowns: base-pose tangent (6, floating only), joint positions, and
    the stacked contact wrench.  Residuals: commanded pose errors, contact
    frames pinned at their initial poses, the equilibrium residual, and
    hinge penalties on limit/margin violations.  Deliberately shares no
    derivative code or solver with the retargeting path.
    """
    from .statics import statics_evaluate

    m = contacts.wrench_dim
    nb = 6 if model.floating_base else 0
    kin0 = Kinematics(model, cfg0)
    pins = []
    for e, _, dim in contacts.layout():
        pins.append((e.spec.frame, kin0.pose_of(e.spec.frame), dim))
    weight = model.total_mass * 9.81

    def unpack(z):
        if nb:
            base = pose_integrate(cfg0.base_pose, Twist(linear=z[:3], angular=z[3:6]), 1.0)
        else:
            base = cfg0.base_pose
        cfg = Configuration(base_pose=base, joint_positions=z[nb : nb + model.n])
        return cfg, z[nb + model.n :]

    def residuals(z):
        cfg, lam = unpack(z)
        kin = Kinematics(model, cfg)
        out = []
        for cmd in commands:
            out.append(pose_error_log(kin.pose_of(cmd.frame), cmd.target))
        for frame, pin, dim in pins:
            err = pose_error_log(kin.pose_of(frame), pin)
            out.append(err if dim == 6 else err[:3])
        res = statics_evaluate(model, contacts, cfg, lam, kin)
        out.append(res.base_residual / (1.0 + weight))
        # hinge penalties keep the solution inside limits and margins
        q = cfg.joint_positions
        out.append(10.0 * np.maximum(0.0, model.joint_lower - q))
        out.append(10.0 * np.maximum(0.0, q - model.joint_upper))
        margins = np.array([v for _, _, v in contacts.margins(lam)]) if m else np.zeros(0)
        out.append(np.maximum(0.0, -margins))
        return np.concatenate(out) if out else np.zeros(1)

    z0 = np.concatenate([np.zeros(nb), cfg0.joint_positions, np.zeros(m)])
    sol = least_squares(residuals, z0, method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    cfg, lam = unpack(sol.x)
    rnorm = float(np.linalg.norm(residuals(sol.x)))
    return OracleResult(cfg=cfg, lam=lam, converged=rnorm <= np.sqrt(tol), residual=rnorm)


# -- trace verification ------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    margin_min: float = -1e-6
    residual_factor: float = 1e-6  # allowed |r_fb| = factor * (1 + total weight)
    ramp_jitter: float = 1e-3  # N per tick of allowed f_z increase mid-removal
    fz_at_disable: float = 1.0  # N


@dataclass
class VerificationReport:
    ok: bool
    min_margin: float
    min_margin_by_class: dict
    max_residual: float
    max_joint_excursion: float
    max_torque_ratio: float
    ramp_max_increase: float
    fz_at_disable: float
    timing_us: dict
    failures: list


def verify_trace(trace: Trace, thresholds: Thresholds = Thresholds()) -> VerificationReport:
    if not trace.records:
        raise ScenarioError("empty trace")
    lower = np.asarray(trace.meta["joint_lower"])
    upper = np.asarray(trace.meta["joint_upper"])
    effort = np.asarray(trace.meta["effort_max"])
    weight = float(trace.meta["total_weight"])
    res_max = thresholds.residual_factor * (1.0 + weight)

    failures = []
    min_margin = np.inf
    by_class: dict = {}
    max_residual = 0.0
    max_exc = 0.0
    max_torque_ratio = 0.0
    ramp_fz: dict = {}
    ramp_max_inc = 0.0
    fz_disable = 0.0
    times = []

    for i, r in enumerate(trace.records):
        times.append(r["solve_us"])
        if r["status"] != "optimal":
            failures.append((i, f"solver status {r['status']}"))
        for frame, name, v in r["margins"]:
            min_margin = min(min_margin, v)
            by_class[name] = min(by_class.get(name, np.inf), v)
            if v < thresholds.margin_min:
                failures.append((i, f"margin {frame}/{name} = {v:.3e}"))
        max_residual = max(max_residual, r["residual"])
        if r["residual"] > res_max:
            failures.append((i, f"residual {r['residual']:.3e}"))
        q = np.asarray(r["joints"])
        exc = float(np.max(np.maximum(lower - q, q - upper), initial=0.0))
        max_exc = max(max_exc, exc)
        if exc > 0.0:
            failures.append((i, f"joint limit exceeded by {exc:.3e}"))
        if len(q):
            ratio = float(np.max(np.abs(np.asarray(r["tau"])) / effort))
            max_torque_ratio = max(max_torque_ratio, ratio)
            if ratio > 0.9 + 1e-9:
                failures.append((i, f"torque at {ratio:.3f} of rating"))
        seen = set()
        for frame, phase, fz in r["contacts"]:
            seen.add(frame)
            if phase == RAMPING_OUT:
                if frame in ramp_fz:
                    inc = fz - ramp_fz[frame]
                    ramp_max_inc = max(ramp_max_inc, inc)
                    if inc > thresholds.ramp_jitter:
                        failures.append((i, f"removal f_z increased by {inc:.3e} on {frame}"))
                ramp_fz[frame] = fz
        for frame in list(ramp_fz):
            if frame not in seen:  # ramp finished: the contact disabled
                fz_disable = max(fz_disable, ramp_fz.pop(frame))
                if fz_disable > thresholds.fz_at_disable:
                    failures.append((i, f"f_z at disable {fz_disable:.3e} on {frame}"))

    timing = {
        "p50": float(np.percentile(times, 50)),
        "p95": float(np.percentile(times, 95)),
        "p99": float(np.percentile(times, 99)),
    }
    return VerificationReport(
        ok=not failures,
        min_margin=float(min_margin),
        min_margin_by_class={k: float(v) for k, v in by_class.items()},
        max_residual=float(max_residual),
        max_joint_excursion=float(max_exc),
        max_torque_ratio=float(max_torque_ratio),
        ramp_max_increase=float(ramp_max_inc),
        fz_at_disable=float(fz_disable),
        timing_us=timing,
        failures=failures,
    )
