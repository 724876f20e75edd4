"""Quasi-static whole-body retargeting core.

Each tick solves a small dense QP over the rate vector
xdot = (base twist 6 if floating; joint velocities n; wrench rates m),
then integrates the desired configuration and contact wrenches:

    x_{t+1} = x_t + xdot * dt,   x = (q^d, lam^d)

The cost trades effector tracking against posture, torque and wrench
regularization; equality rows keep the static equilibrium residual at
zero via a Newton correction and pin contact frames in place; inequality
rows impose joint, torque and contact-stability limits on the
post-integration state, so every accepted step stays feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .contacts import ContactError, ContactSet, RAMPING_IN, RAMPING_OUT, contact_inequality_rows, switch_begin, switch_tick
from .geometry import Pose, pose_error_log
from .model import Configuration, Kinematics, ModelError, RobotModel, integrate_configuration
from .qpsolver import OPTIMAL, QPProblem, QPSolution, solve_qp
from .statics import stacked_contact_jacobian, statics_derivatives, statics_evaluate


@dataclass(frozen=True)
class RetargetConfig:
    dt: float = 0.005
    w_position: float = 10.0
    w_orientation: float = 1.0
    w_posture: float = 1e-2
    w_torque: float = 1e-4
    w_wrench: float = 1e-6
    w_wrench_rate: float = 1e-5
    w_velocity: float = 1e-3
    k_eq: float = 1.0
    joint_margin: float = 0.01  # rad kept clear of position limits
    torque_factor: float = 0.9  # fraction of rated effort allowed
    posture_gain: float = 1.0  # 1/s pull toward the default posture
    track_linear_max: float = 0.3  # m/s cap on the tracking residual
    track_angular_max: float = 1.5  # rad/s cap on the tracking residual

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if not 0.0 < self.k_eq <= 1.0:
            raise ValueError("k_eq must be in (0, 1]")
        for name in ("w_position", "w_orientation", "w_posture", "w_torque",
                     "w_wrench", "w_wrench_rate", "w_velocity"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class EffectorCommand:
    frame: str
    target: Pose
    weight_scale: float = 1.0


@dataclass(frozen=True)
class RetargetState:
    cfg: Configuration
    lam: np.ndarray
    contacts: ContactSet
    time: float = 0.0
    torques: np.ndarray = field(default_factory=lambda: np.zeros(0))
    base_residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    margins: tuple = ()
    rate: np.ndarray | None = None
    solver_status: str = OPTIMAL
    converged: bool = False
    # kinematics snapshot at cfg, carried to avoid recomputing it next tick
    kin: Kinematics | None = field(default=None, repr=False, compare=False)

    @property
    def min_margin(self) -> float:
        return min((m for _, _, m in self.margins), default=np.inf)


def _with_statics(model: RobotModel, state: RetargetState, **changes) -> RetargetState:
    """Rebuild the derived fields (torques, residual, margins) of a state."""
    s = replace(state, **changes)
    kin = Kinematics(model, s.cfg)
    res = statics_evaluate(model, s.contacts, s.cfg, s.lam, kin)
    return replace(
        s,
        torques=res.joint_torques,
        base_residual=res.base_residual,
        margins=tuple(s.contacts.margins(s.lam)),
        kin=kin,
    )


def initial_state(model: RobotModel, contacts: ContactSet | None = None,
                  cfg: Configuration | None = None) -> RetargetState:
    contacts = contacts.copy() if contacts is not None else ContactSet()
    cfg = cfg if cfg is not None else model.default_configuration()
    cfg.check(model)
    state = RetargetState(cfg=cfg, lam=np.zeros(contacts.wrench_dim), contacts=contacts)
    return _with_statics(model, state)


def _validate_commands(model: RobotModel, state: RetargetState, commands) -> None:
    active = {e.spec.frame for e in state.contacts.entries if e.active}
    for c in commands:
        if c.frame not in model.frame_names():
            raise ModelError(f"unknown frame '{c.frame}'")
        if c.frame in active:
            raise ContactError(f"'{c.frame}' is an active contact and cannot be commanded")


def _clamp(v: np.ndarray, cap: float) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm > cap > 0.0:
        return v * (cap / norm)
    return v


def _ramp_preview(entry, dt: float):
    """Contact state advanced by one tick, used to bound the next wrench."""
    st = entry.state
    if st.phase not in (RAMPING_IN, RAMPING_OUT):
        return st
    return replace(st, ramp_elapsed=min(st.ramp_duration, st.ramp_elapsed + dt))


def _assemble(model: RobotModel, state: RetargetState, commands, config: RetargetConfig):
    _validate_commands(model, state, commands)
    dt = config.dt
    nv = model.nv
    m = state.contacts.wrench_dim
    dim = nv + m
    joff = 6 if model.floating_base else 0

    kin = state.kin if state.kin is not None and state.kin.cfg is state.cfg else Kinematics(model, state.cfg)
    res = statics_evaluate(model, state.contacts, state.cfg, state.lam, kin)
    der = statics_derivatives(model, state.contacts, state.cfg, state.lam, kin)
    Jc = stacked_contact_jacobian(model, kin, state.contacts)
    tau = res.joint_torques

    C_rows, c_rows, w_rows = [], [], []

    def add_rows(C, c, w):
        C_rows.append(np.atleast_2d(C))
        c_rows.append(np.atleast_1d(c))
        w_rows.append(np.full(np.atleast_1d(c).shape[0], w))

    # effector tracking: J qdot toward the clamped pose-error velocity
    for cmd in commands:
        J = kin.frame_jacobian(cmd.frame)
        err = pose_error_log(kin.pose_of(cmd.frame), cmd.target)
        v_lin = _clamp(err[:3] / dt, config.track_linear_max)
        v_ang = _clamp(err[3:] / dt, config.track_angular_max)
        C = np.zeros((6, dim))
        C[:, :nv] = J
        add_rows(C[:3], v_lin, config.w_position * cmd.weight_scale)
        add_rows(C[3:], v_ang, config.w_orientation * cmd.weight_scale)

    # default-posture pull (actuated joints only)
    if model.n:
        q_def = model.default_configuration().joint_positions
        C = np.zeros((model.n, dim))
        C[:, joff : joff + model.n] = np.eye(model.n)
        add_rows(C, config.posture_gain * (q_def - state.cfg.joint_positions), config.w_posture)

    # torque minimization on tau + taudot*dt
    T = np.zeros((model.n, dim))
    T[:, :nv] = dt * der.dtau_dq
    T[:, nv:] = dt * der.dtau_dlam
    if model.n:
        add_rows(T, -tau, config.w_torque)

    # wrench magnitude / rate regularization, velocity damping
    if m:
        C = np.zeros((m, dim))
        C[:, nv:] = dt * np.eye(m)
        add_rows(C, -state.lam, config.w_wrench)
        add_rows(np.hstack([np.zeros((m, nv)), np.eye(m)]), np.zeros(m), config.w_wrench_rate)
    add_rows(np.hstack([np.eye(nv), np.zeros((nv, m))]), np.zeros(nv), config.w_velocity)

    C = np.vstack(C_rows)
    c = np.concatenate(c_rows)
    w = np.concatenate(w_rows)
    H = (C.T * w) @ C
    H = 0.5 * (H + H.T)
    g = -(C.T * w) @ c

    # equalities: Newton correction of the base residual, contact pinning
    eq_A, eq_b = [], []
    if model.floating_base:
        A = np.zeros((6, dim))
        A[:, :nv] = der.dr_dq
        A[:, nv:] = der.dr_dlam
        eq_A.append(A)
        eq_b.append(config.k_eq * res.base_residual / dt)
    if m:
        A = np.zeros((Jc.shape[0], dim))
        A[:, :nv] = Jc
        eq_A.append(A)
        eq_b.append(np.zeros(Jc.shape[0]))
    A_eq = np.vstack(eq_A) if eq_A else None
    b_eq = np.concatenate(eq_b) if eq_A else None

    # inequalities on the post-integration state: A xdot + b >= 0
    in_A, in_b = [], []
    q = state.cfg.joint_positions
    if model.n:
        E = np.zeros((model.n, dim))
        E[:, joff : joff + model.n] = np.eye(model.n)
        in_A += [dt * E, -dt * E, E, -E]
        in_b += [q - model.joint_lower - config.joint_margin,
                 model.joint_upper - config.joint_margin - q,
                 model.joint_velocity_max, model.joint_velocity_max]
        cap = config.torque_factor * model.joint_effort_max
        in_A += [T, -T]
        in_b += [cap + tau, cap - tau]
    for entry, off, cdim in state.contacts.layout():
        A_loc, b_loc = contact_inequality_rows(
            entry.spec, _ramp_preview(entry, dt), state.lam[off : off + cdim], dt
        )
        A = np.zeros((A_loc.shape[0], dim))
        A[:, nv + off : nv + off + cdim] = A_loc
        in_A.append(A)
        in_b.append(b_loc)
    A_in = np.vstack(in_A) if in_A else None
    b_in = np.concatenate(in_b) if in_b else None

    warm = state.rate if state.rate is not None and state.rate.shape == (dim,) else None
    return QPProblem(H, g, A_eq, b_eq, A_in, b_in, warm_start=warm)


def build_qp(model: RobotModel, state: RetargetState, commands, config: RetargetConfig) -> QPProblem:
    """Assemble one tick's QP without solving it."""
    return _assemble(model, state, commands, config)


def _realign_wrench(old_contacts: ContactSet, old_lam: np.ndarray, new_contacts: ContactSet) -> np.ndarray:
    """Re-stack a wrench vector after contacts were enabled or disabled."""
    old = {e.spec.frame: old_lam[off : off + dim] for e, off, dim in old_contacts.layout()}
    lam = np.zeros(new_contacts.wrench_dim)
    for e, off, dim in new_contacts.layout():
        if e.spec.frame in old:
            lam[off : off + dim] = old[e.spec.frame]
    return lam


def step(model: RobotModel, state: RetargetState, commands, config: RetargetConfig) -> RetargetState:
    """One retargeting tick; on solver failure the state is held, flagged."""
    problem = _assemble(model, state, commands, config)
    sol = solve_qp(problem)
    if sol.status != OPTIMAL:
        return replace(state, solver_status=sol.status, converged=False)

    nv = model.nv
    xdot = sol.x
    cfg = integrate_configuration(model, state.cfg, xdot[:nv], config.dt)
    lam = state.lam + xdot[nv:] * config.dt

    contacts = state.contacts.copy()
    disabled = False
    for e in contacts.entries:
        if e.state.phase in (RAMPING_IN, RAMPING_OUT):
            e.state, _ = switch_tick(e.state, config.dt, f_max=e.spec.f_max)
            disabled = disabled or not e.active
    if disabled:
        lam = _realign_wrench(state.contacts, lam, contacts)

    return _with_statics(
        model,
        state,
        cfg=cfg,
        lam=lam,
        contacts=contacts,
        time=state.time + config.dt,
        rate=xdot,
        solver_status=OPTIMAL,
    )


def converge(model: RobotModel, state: RetargetState, commands, config: RetargetConfig,
             tol: float = 1e-9, max_iters: int = 300) -> RetargetState:
    """Step until the rate vector vanishes; flags success on the state."""
    for _ in range(max_iters):
        new = step(model, state, commands, config)
        if new.solver_status != OPTIMAL:
            return new
        if new.rate is not None and np.max(np.abs(new.rate)) < tol:
            return replace(new, converged=True)
        state = new
    return replace(state, converged=False)


def begin_contact_switch(model: RobotModel, state: RetargetState, frame: str,
                         action: str, duration: float = 2.0) -> RetargetState:
    """Start adding or removing a contact; keeps the wrench vector aligned."""
    contacts = state.contacts.copy()
    entry = contacts.entry(frame)
    f_z = 0.0
    if action == "remove":
        for e, off, dim in state.contacts.layout():
            if e.spec.frame == frame:
                f_z = float(state.lam[off + 2])
    entry.state = switch_begin(entry.state, action, duration, current_f_z=f_z)
    lam = _realign_wrench(state.contacts, state.lam, contacts)
    return _with_statics(model, state, contacts=contacts, lam=lam)
