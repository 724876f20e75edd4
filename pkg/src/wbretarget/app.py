"""Live teleoperation service: a wire protocol around the retargeting loop.

One loop thread owns all mutable state (``TeleopCore``).  WebSocket
sessions talk to it through an ordered queue of immutable JSON
messages, applied at tick boundaries in arrival order; every broadcast
is an immutable snapshot pushed into a bounded per-client queue with a
drop-oldest policy, so a slow or dead client can never delay a tick.

Wire protocol: text frames, one JSON document per frame, ``v: 1`` and a
``type`` discriminator.  Client messages: set_target, switch_contact,
external_wrench, set_param, subscribe.  Server messages: state, event,
error.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
import math
import queue
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .contacts import (
    ContactEntry,
    ContactError,
    ContactSet,
    ContactState,
    DISABLED,
    ENABLED,
    RAMPING_IN,
    RAMPING_OUT,
)
from .geometry import Pose, Wrench, pose_error_log
from .model import Kinematics, RobotModel
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
from .retarget import (
    EffectorCommand,
    RetargetConfig,
    begin_contact_switch,
    converge,
    initial_state,
    step,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

# exact field set per client message type; anything else is rejected
_MESSAGE_FIELDS = {
    "set_target": {"frame": str, "pose": list},
    "switch_contact": {"frame": str, "action": str},
    "external_wrench": {"frame": str, "wrench": list},
    "set_param": {"path": str, "value": (int, float)},
    "subscribe": {"rate": (int, float)},
}

# settable parameters: wire path -> (parameter group, field, lo, hi)
PARAM_BOUNDS = {
    "weights.position": ("retarget", "w_position", 1e-6, 1e3),
    "weights.orientation": ("retarget", "w_orientation", 1e-6, 1e3),
    "weights.posture": ("retarget", "w_posture", 0.0, 1e3),
    "weights.torque": ("retarget", "w_torque", 0.0, 1e3),
    "weights.wrench": ("retarget", "w_wrench", 0.0, 1e3),
    "weights.wrench_rate": ("retarget", "w_wrench_rate", 0.0, 1e3),
    "weights.velocity": ("retarget", "w_velocity", 0.0, 1e3),
    "posture_gain": ("retarget", "posture_gain", 0.0, 10.0),
    "filter.cutoff": ("filter", "cutoff", 0.1, 20.0),
    "filter.v_max_linear": ("filter", "v_max_linear", 0.01, 2.0),
    "filter.v_max_angular": ("filter", "v_max_angular", 0.01, 5.0),
    "admittance.gain_linear": ("admittance", "gain_linear", 0.0, 0.1),
    "admittance.gain_angular": ("admittance", "gain_angular", 0.0, 0.5),
}


def error_msg(code: str, detail: str) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "error", "code": code, "detail": detail}


def event_msg(name: str, **details) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "event", "event": name, **details}


def validate_message(msg) -> dict | None:
    """Schema check; returns an error message dict, or None when valid."""
    if not isinstance(msg, dict):
        return error_msg("bad_schema", "message must be a JSON object")
    if msg.get("v") != PROTOCOL_VERSION:
        return error_msg("bad_version", f"expected v: {PROTOCOL_VERSION}")
    kind = msg.get("type")
    if kind not in _MESSAGE_FIELDS:
        return error_msg("unknown_type", f"unknown message type {kind!r}")
    fields = _MESSAGE_FIELDS[kind]
    expected = set(fields) | {"v", "type"}
    if set(msg) != expected:
        return error_msg("bad_schema", f"{kind} fields must be exactly {sorted(expected)}")
    for name, types in fields.items():
        v = msg[name]
        if not isinstance(v, types) or isinstance(v, bool):
            return error_msg("bad_schema", f"field {name!r} has the wrong type")
    return None


def _finite_vector(values, n) -> np.ndarray | None:
    try:
        a = np.asarray(values, dtype=float).reshape(n)
    except (TypeError, ValueError):
        return None
    return a if np.all(np.isfinite(a)) else None


@dataclass(frozen=True)
class ServiceConfig:
    rate: float = 200.0
    contacts: tuple = ()  # (ContactSpec, enabled) pairs
    retarget: RetargetConfig = field(default_factory=RetargetConfig)
    filter: FilterParams = field(default_factory=FilterParams)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    # a contact may only be added once its effector sits at the commanded pose
    add_gate_linear: float = 0.01
    add_gate_angular: float = 0.05
    switch_duration: float = 2.0

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ValueError("rate must be > 0")


class TeleopCore:
    """Retargeting loop state plus message handling; strictly single-threaded.

    ``handle_message`` and ``tick`` must only ever run on the loop thread;
    everything they return is a plain JSON-serializable dict.
    """

    def __init__(self, model: RobotModel, config: ServiceConfig | None = None):
        config = config if config is not None else ServiceConfig()
        self.model = model
        self.config = config
        self.dt = 1.0 / config.rate
        self.retarget_cfg = replace(config.retarget, dt=self.dt)
        self.filter_params = config.filter
        self.admittance_params = config.admittance
        contacts = ContactSet(
            [
                ContactEntry(spec, ContactState(phase=ENABLED if enabled else DISABLED))
                for spec, enabled in config.contacts
            ]
        )
        self.state = initial_state(model, contacts)
        if contacts.wrench_dim:
            # settle the wrench distribution so the first broadcast is at rest
            self.state = converge(model, self.state, [], self.retarget_cfg, tol=1e-8, max_iters=300)
            self.state = replace(self.state, time=0.0)
        self.targets: dict[str, Pose] = {}
        self.filters: dict[str, FilterState] = {}
        self.adms: dict[str, AdmittanceState] = {}
        self.wrenches: dict[str, Wrench] = {}
        self._saturated: set = set()

    # -- helpers -------------------------------------------------------

    def _kin(self) -> Kinematics:
        return self.state.kin if self.state.kin is not None else Kinematics(self.model, self.state.cfg)

    def _track(self, frame: str) -> None:
        if frame not in self.filters:
            here = self._kin().pose_of(frame)
            self.targets[frame] = here
            self.filters[frame] = FilterState(filtered=here, params=self.filter_params)
            self.adms[frame] = AdmittanceState(params=self.admittance_params)

    def _untrack(self, frame: str) -> None:
        for d in (self.targets, self.filters, self.adms, self.wrenches):
            d.pop(frame, None)
        self._saturated.discard(frame)

    def _active_contact_frames(self) -> set:
        return {e.spec.frame for e in self.state.contacts.entries if e.active}

    # -- message handling ----------------------------------------------

    def handle_message(self, msg: dict) -> list:
        """Apply one client message; returns the server messages it produced."""
        err = validate_message(msg)
        if err is not None:
            return [err]
        handler = getattr(self, "_on_" + msg["type"])
        return handler(msg)

    def _on_set_target(self, msg: dict) -> list:
        frame = msg["frame"]
        if frame not in self.model.frame_names():
            return [error_msg("unknown_frame", f"unknown frame {frame!r}")]
        if frame in self._active_contact_frames():
            return [error_msg("active_contact", f"{frame!r} is an active contact and cannot be commanded")]
        flat = _finite_vector(msg["pose"], 7)
        if flat is None or np.linalg.norm(flat[3:]) < 1e-9:
            return [error_msg("bad_schema", "pose must be 7 finite numbers [px py pz qw qx qy qz]")]
        self._track(frame)
        self.targets[frame] = Pose.from_flat(flat)
        self._saturated.discard(frame)
        return []

    def _on_external_wrench(self, msg: dict) -> list:
        frame = msg["frame"]
        if frame not in self.model.frame_names():
            return [error_msg("unknown_frame", f"unknown frame {frame!r}")]
        if frame in self._active_contact_frames():
            return [error_msg("active_contact", f"{frame!r} is an active contact and cannot be pushed")]
        w = _finite_vector(msg["wrench"], 6)
        if w is None:
            return [error_msg("bad_schema", "wrench must be 6 finite numbers [fx fy fz tx ty tz]")]
        self._track(frame)
        if np.any(w != 0.0):
            self.wrenches[frame] = Wrench(force=w[:3], torque=w[3:])
        else:
            self.wrenches.pop(frame, None)
        return []

    def _on_switch_contact(self, msg: dict) -> list:
        frame, action = msg["frame"], msg["action"]
        if action not in ("add", "remove"):
            return [error_msg("bad_schema", "action must be 'add' or 'remove'")]
        if frame not in self.model.frame_names():
            return [error_msg("unknown_frame", f"unknown frame {frame!r}")]
        try:
            entry = self.state.contacts.entry(frame)
        except ContactError as exc:
            return [error_msg("illegal_switch", str(exc))]
        if action == "add":
            if entry.state.phase != DISABLED:
                return [error_msg("illegal_switch", f"{frame!r} is already active")]
            if frame in self.targets:
                err6 = pose_error_log(self._kin().pose_of(frame), self.targets[frame])
                far = (
                    np.linalg.norm(err6[:3]) > self.config.add_gate_linear
                    or np.linalg.norm(err6[3:]) > self.config.add_gate_angular
                )
                if far:
                    return [
                        event_msg(
                            "switch_rejected",
                            frame=frame,
                            action=action,
                            reason="effector has not reached its commanded contact pose",
                        )
                    ]
        else:
            if entry.state.phase != ENABLED:
                return [error_msg("illegal_switch", f"{frame!r} is not an enabled contact")]
            if not self._removal_feasible(frame):
                return [
                    event_msg(
                        "switch_rejected",
                        frame=frame,
                        action=action,
                        reason="removal infeasible: remaining contacts cannot take the load here",
                    )
                ]
        try:
            new_state = begin_contact_switch(
                self.model, self.state, frame, action, self.config.switch_duration
            )
        except ContactError as exc:
            return [error_msg("illegal_switch", str(exc))]
        if action == "add":
            self._untrack(frame)  # the frame is pinned from now on
        self.state = new_state
        return [event_msg("switch_started", frame=frame, action=action)]

    def _removal_feasible(self, frame: str) -> bool:
        """Trial QP with this contact's force cap taken to zero: can the
        remaining contacts carry the load at the current configuration?"""
        trial = self.state.contacts.copy()
        entry = trial.entry(frame)
        f_z = 0.0
        for e, off, _ in self.state.contacts.layout():
            if e.spec.frame == frame:
                f_z = float(self.state.lam[off + 2])
        # one preview tick lands exactly at the end of this ramp (cap 0)
        entry.state = ContactState(
            phase=RAMPING_OUT, ramp_elapsed=1.0, ramp_duration=1.0 + self.dt, captured_bound=f_z
        )
        probe = step(self.model, replace(self.state, contacts=trial), [], self.retarget_cfg)
        return probe.solver_status == OPTIMAL

    def _on_set_param(self, msg: dict) -> list:
        path, value = msg["path"], msg["value"]
        if path not in PARAM_BOUNDS:
            return [error_msg("unknown_param", f"unknown parameter {path!r}")]
        group, name, lo, hi = PARAM_BOUNDS[path]
        value = float(value)
        if not math.isfinite(value) or not lo <= value <= hi:
            return [error_msg("out_of_range", f"{path} must be in [{lo}, {hi}]")]
        try:
            if group == "retarget":
                self.retarget_cfg = replace(self.retarget_cfg, **{name: value})
            elif group == "filter":
                self.filter_params = replace(self.filter_params, **{name: value})
                self.filters = {
                    f: replace(fs, params=self.filter_params) for f, fs in self.filters.items()
                }
            else:
                self.admittance_params = replace(self.admittance_params, **{name: value})
                self.adms = {
                    f: replace(a, params=self.admittance_params) for f, a in self.adms.items()
                }
        except ValueError as exc:
            return [error_msg("out_of_range", str(exc))]
        return []

    def _on_subscribe(self, msg: dict) -> list:
        # broadcast rate is a session concern; the network layer intercepts
        # subscribe before the loop queue, so nothing reaches the core
        return []

    # -- the loop ------------------------------------------------------

    def tick(self) -> tuple:
        """Advance one period; returns (state message, event messages)."""
        events = []
        commands = []
        zero = Wrench()
        for frame in self.filters:
            self.adms[frame] = admittance_tick(
                self.adms[frame], self.wrenches.get(frame, zero), self.dt
            )
            self.filters[frame] = fs = filter_tick(self.filters[frame], self.targets[frame], self.dt)
            p = fs.params
            saturated = (
                np.linalg.norm(fs.velocity[:3]) >= p.v_max_linear * (1.0 - 1e-9)
                or np.linalg.norm(fs.velocity[3:]) >= p.v_max_angular * (1.0 - 1e-9)
            )
            if saturated and frame not in self._saturated:
                self._saturated.add(frame)
                events.append(event_msg("command_clamped", frame=frame))
            elif not saturated:
                self._saturated.discard(frame)
            commands.append(EffectorCommand(frame, compose_command(fs.filtered, self.adms[frame])))
        phases = {e.spec.frame: e.state.phase for e in self.state.contacts.entries}
        t0 = time.perf_counter()
        self.state = step(self.model, self.state, commands, self.retarget_cfg)
        solve_us = (time.perf_counter() - t0) * 1e6
        if self.state.solver_status != OPTIMAL:
            events.append(event_msg("solver_soft_fail", status=self.state.solver_status))
        for e in self.state.contacts.entries:
            was, now = phases.get(e.spec.frame), e.state.phase
            if was in (RAMPING_IN, RAMPING_OUT) and now in (ENABLED, DISABLED):
                events.append(event_msg("switch_completed", frame=e.spec.frame, phase=now))
        return self.snapshot(solve_us), events

    def snapshot(self, solve_us: float = 0.0) -> dict:
        s = self.state
        kin = self._kin()
        return {
            "v": PROTOCOL_VERSION,
            "type": "state",
            "t": round(s.time, 9),
            "base_pose": s.cfg.base_pose.flat(),
            "joint_positions": s.cfg.joint_positions.tolist(),
            "effectors": {f: kin.pose_of(f).flat() for f in self.filters},
            "contacts": [
                {"frame": e.spec.frame, "phase": e.state.phase, "wrench": s.lam[off : off + dim].tolist()}
                for e, off, dim in s.contacts.layout()
            ],
            "margins": [[f, n, float(v)] for f, n, v in s.margins],
            "residual": float(np.linalg.norm(s.base_residual)),
            "solve_us": float(solve_us),
        }


# -- network layer -----------------------------------------------------


def _offer(q: queue.Queue, item) -> None:
    """Put with drop-oldest overflow: the freshest snapshot always wins."""
    while True:
        try:
            q.put_nowait(item)
            return
        except queue.Full:
            try:
                q.get_nowait()
            except queue.Empty:
                pass


class _Client:
    def __init__(self, loop_rate: float, rate: float):
        self.queue: queue.Queue = queue.Queue(maxsize=8)
        self.loop_rate = loop_rate
        self.every = max(1, round(loop_rate / rate))
        self.countdown = 0

    def set_rate(self, rate: float) -> None:
        self.every = max(1, round(self.loop_rate / rate))


class TeleopService:
    """Owns the loop thread; sessions register bounded output queues."""

    def __init__(self, core: TeleopCore):
        self.core = core
        self.inbox: queue.Queue = queue.Queue()
        self.clients: dict = {}
        self._ids = itertools.count()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="teleop-loop", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def register(self, rate: float = 10.0) -> int:
        client = _Client(self.core.config.rate, rate)
        with self._lock:
            cid = next(self._ids)
            self.clients[cid] = client
        return cid

    def unregister(self, cid: int) -> None:
        with self._lock:
            self.clients.pop(cid, None)

    def submit(self, cid: int, msg: dict) -> None:
        self.inbox.put((cid, msg))

    def set_rate(self, cid: int, rate: float) -> None:
        with self._lock:
            if cid in self.clients:
                self.clients[cid].set_rate(rate)

    def _route(self, cid: int, messages: list) -> None:
        with self._lock:
            sender = self.clients.get(cid)
            for m in messages:
                if m["type"] == "error":
                    if sender is not None:
                        _offer(sender.queue, m)
                else:  # events are visible to everyone
                    for c in self.clients.values():
                        _offer(c.queue, m)

    def _broadcast_state(self, state: dict) -> None:
        with self._lock:
            for c in self.clients.values():
                c.countdown -= 1
                if c.countdown <= 0:
                    c.countdown = c.every
                    _offer(c.queue, state)

    def _run(self) -> None:
        period = self.core.dt
        next_tick = time.perf_counter()
        while not self._stop.is_set():
            while True:  # tick boundary: apply pending messages in arrival order
                try:
                    cid, msg = self.inbox.get_nowait()
                except queue.Empty:
                    break
                self._route(cid, self.core.handle_message(msg))
            state, events = self.core.tick()
            for ev in events:
                self._route(-1, [ev])
            self._broadcast_state(state)
            next_tick += period
            now = time.perf_counter()
            if next_tick < now:  # fell behind: don't spiral, just rephase
                next_tick = now
            else:
                self._stop.wait(next_tick - now)


def create_app(model: RobotModel, config: ServiceConfig | None = None):
    """FastAPI application exposing the loop at the /ws WebSocket endpoint."""
    core = TeleopCore(model, config)
    service = TeleopService(core)

    @asynccontextmanager
    async def lifespan(app):
        service.start()
        yield
        service.stop()

    app = FastAPI(title="wbretarget teleoperation service", lifespan=lifespan)
    app.state.service = service

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        cid = service.register()
        client = service.clients[cid]

        async def pump():
            poll = core.dt / 2.0
            while True:
                try:
                    item = client.queue.get_nowait()
                except queue.Empty:
                    await asyncio.sleep(poll)
                    continue
                await websocket.send_text(json.dumps(item))

        pump_task = asyncio.create_task(pump())
        try:
            while True:
                text = await websocket.receive_text()
                try:
                    msg = json.loads(text)
                except ValueError:
                    _offer(client.queue, error_msg("bad_schema", "frame is not valid JSON"))
                    continue
                err = validate_message(msg)
                if err is not None:
                    _offer(client.queue, err)
                    continue
                if msg["type"] == "subscribe":
                    rate = float(msg["rate"])
                    if not 0.0 < rate <= core.config.rate:
                        _offer(
                            client.queue,
                            error_msg("out_of_range", f"rate must be in (0, {core.config.rate}]"),
                        )
                    else:
                        service.set_rate(cid, rate)
                    continue
                service.submit(cid, msg)
        except WebSocketDisconnect:
            pass
        finally:
            pump_task.cancel()
            service.unregister(cid)

    return app
