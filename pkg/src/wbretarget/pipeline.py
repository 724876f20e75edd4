"""Operator-command conditioning and the admittance offset.

Raw teleoperation targets pass through a low-pass filter, a velocity
clamp and an acceleration clamp (applied in that order).  Measured
external wrenches are turned into a velocity through a deadband and a
gain, integrated into a relative offset pose that is superimposed on the
operator's command; with no interaction the offset leaks back to
identity so the command eventually matches the operator again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, Twist, Wrench, pose_error_log, pose_integrate, quat_exp, quat_log


def _clamp_norm(v: np.ndarray, cap: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n > cap:
        return v * (cap / n)
    return v


@dataclass(frozen=True)
class FilterParams:
    cutoff: float = 2.0  # Hz
    v_max_linear: float = 0.3  # m/s
    v_max_angular: float = 1.0  # rad/s
    a_max_linear: float = 1.0  # m/s^2
    a_max_angular: float = 3.0  # rad/s^2

    def __post_init__(self):
        for name in ("cutoff", "v_max_linear", "v_max_angular", "a_max_linear", "a_max_angular"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class FilterState:
    filtered: Pose = field(default_factory=Pose.identity)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(6))
    params: FilterParams = field(default_factory=FilterParams)

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(6))


def filter_tick(fs: FilterState, raw_target: Pose, dt: float) -> FilterState:
    """Low-pass toward the raw target, then clamp velocity and acceleration."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    p = fs.params
    alpha = dt / (1.0 / (2.0 * math.pi * p.cutoff) + dt)
    err = pose_error_log(fs.filtered, raw_target)
    v = alpha * err / dt
    v = np.concatenate([_clamp_norm(v[:3], p.v_max_linear), _clamp_norm(v[3:], p.v_max_angular)])
    dv = v - fs.velocity
    dv = np.concatenate(
        [_clamp_norm(dv[:3], p.a_max_linear * dt), _clamp_norm(dv[3:], p.a_max_angular * dt)]
    )
    v = fs.velocity + dv
    pose = pose_integrate(fs.filtered, Twist(linear=v[:3], angular=v[3:]), dt)
    return replace(fs, filtered=pose, velocity=v)


@dataclass(frozen=True)
class AdmittanceParams:
    gain_linear: float = 1e-3  # (m/s) / N
    gain_angular: float = 5e-3  # (rad/s) / (N*m)
    deadband_force: float = 5.0  # N
    deadband_torque: float = 0.5  # N*m
    v_max_linear: float = 0.3
    v_max_angular: float = 1.0
    leak: float = 0.1  # 1/s decay toward identity without interaction
    radius_linear: float = 0.5  # m bound on the offset translation
    radius_angular: float = 1.0  # rad bound on the offset rotation


@dataclass(frozen=True)
class AdmittanceState:
    offset: Pose = field(default_factory=Pose.identity)
    params: AdmittanceParams = field(default_factory=AdmittanceParams)


def _deadband_shrink(v: np.ndarray, band: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n <= band:
        return np.zeros(3)
    return v * ((n - band) / n)


def admittance_tick(adm: AdmittanceState, measured: Wrench, dt: float) -> AdmittanceState:
    """Integrate the measured wrench into the offset; leak when idle."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    p = adm.params
    v_lin = _clamp_norm(p.gain_linear * _deadband_shrink(measured.force, p.deadband_force),
                        p.v_max_linear)
    v_ang = _clamp_norm(p.gain_angular * _deadband_shrink(measured.torque, p.deadband_torque),
                        p.v_max_angular)
    pos = adm.offset.position + v_lin * dt
    rot = quat_log(adm.offset.orientation) + v_ang * dt
    if np.linalg.norm(measured.force) <= p.deadband_force:
        pos = pos * max(0.0, 1.0 - p.leak * dt)
    if np.linalg.norm(measured.torque) <= p.deadband_torque:
        rot = rot * max(0.0, 1.0 - p.leak * dt)
    pos = _clamp_norm(pos, p.radius_linear)
    rot = _clamp_norm(rot, p.radius_angular)
    return replace(adm, offset=Pose(position=pos, orientation=quat_exp(rot)))


def compose_command(teleop: Pose, adm: AdmittanceState) -> Pose:
    """Superimpose the interaction offset on the operator command."""
    from .geometry import pose_compose

    return pose_compose(teleop, adm.offset)
