"""Contact specifications, stability margins and the switching state machine.

A contact is stable when it does not pull (normal force above f_min), does
not slip (force inside an inner linearized friction pyramid), and does not
tilt (center of pressure inside the support rectangle).  All margins are
signed, positive = satisfied, expressed in the contact-local frame with
z the outward surface normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

PLANE = "plane"
POINT = "point"

# phase machine: disabled -> ramping_in -> enabled -> ramping_out -> disabled
DISABLED = "disabled"
RAMPING_IN = "ramping_in"
ENABLED = "enabled"
RAMPING_OUT = "ramping_out"


class ContactError(ValueError):
    pass


@dataclass(frozen=True)
class ContactSpec:
    frame: str
    kind: str = PLANE
    friction: float = 0.5
    cop_half_extents: tuple = (0.05, 0.05)  # (X, Y), plane only
    torsion_friction: float = 0.05  # plane only
    f_min: float = 0.0
    f_max: float = 1000.0

    def __post_init__(self):
        if self.kind not in (PLANE, POINT):
            raise ContactError(f"{self.frame}: unknown contact kind '{self.kind}'")
        if self.friction <= 0.0:
            raise ContactError(f"{self.frame}: friction must be > 0")
        if self.kind == PLANE and (self.cop_half_extents[0] <= 0 or self.cop_half_extents[1] <= 0):
            raise ContactError(f"{self.frame}: cop_half_extents must be > 0")
        if not (0.0 <= self.f_min < self.f_max):
            raise ContactError(f"{self.frame}: need 0 <= f_min < f_max")

    @property
    def wrench_dim(self) -> int:
        return 6 if self.kind == PLANE else 3


@dataclass
class ContactState:
    phase: str = DISABLED
    ramp_elapsed: float = 0.0
    ramp_duration: float = 2.0
    captured_bound: float = 0.0


@dataclass
class ContactEntry:
    spec: ContactSpec
    state: ContactState = field(default_factory=ContactState)

    @property
    def active(self) -> bool:
        return self.state.phase != DISABLED

    def copy(self) -> "ContactEntry":
        return ContactEntry(self.spec, replace(self.state))


class ContactSet:
    """Ordered contacts; non-disabled ones occupy the stacked wrench vector."""

    def __init__(self, entries=()):
        self.entries = [e if isinstance(e, ContactEntry) else ContactEntry(e) for e in entries]
        names = [e.spec.frame for e in self.entries]
        if len(set(names)) != len(names):
            raise ContactError("duplicate contact frame")

    def copy(self) -> "ContactSet":
        return ContactSet([e.copy() for e in self.entries])

    def entry(self, frame: str) -> ContactEntry:
        for e in self.entries:
            if e.spec.frame == frame:
                return e
        raise ContactError(f"no contact declared on frame '{frame}'")

    def layout(self):
        """(entry, offset, dim) for every non-disabled contact, in order."""
        out, off = [], 0
        for e in self.entries:
            if e.active:
                out.append((e, off, e.spec.wrench_dim))
                off += e.spec.wrench_dim
        return out

    @property
    def wrench_dim(self) -> int:
        return sum(e.spec.wrench_dim for e in self.entries if e.active)

    def margins(self, lam: np.ndarray):
        """Named margins of every active contact for a stacked wrench vector."""
        out = []
        for e, off, dim in self.layout():
            bound = effective_force_cap(e.spec, e.state)
            for name, m in contact_margins(e.spec, lam[off : off + dim], f_z_cap=bound):
                out.append((e.spec.frame, name, m))
        return out


def contact_margins(spec: ContactSpec, w, f_z_cap: float | None = None):
    """Signed stability margins (positive = satisfied) for a local wrench."""
    w = np.asarray(w, dtype=float)
    if len(w) != spec.wrench_dim:
        raise ContactError(
            f"{spec.frame}: wrench dim {len(w)} does not match kind '{spec.kind}'"
        )
    fx, fy, fz = w[0], w[1], w[2]
    mu = spec.friction / math.sqrt(2.0)
    cap = spec.f_max if f_z_cap is None else f_z_cap
    margins = [
        ("unilateral", fz - spec.f_min),
        ("friction_x", mu * fz - abs(fx)),
        ("friction_y", mu * fz - abs(fy)),
    ]
    if spec.kind == PLANE:
        tx, ty, tz = w[3], w[4], w[5]
        X, Y = spec.cop_half_extents
        margins += [
            ("cop_x", Y * fz - abs(tx)),
            ("cop_y", X * fz - abs(ty)),
            ("torsion", spec.torsion_friction * fz - abs(tz)),
        ]
    margins.append(("force_cap", cap - fz))
    return margins


def effective_force_cap(spec: ContactSpec, state: ContactState) -> float:
    """Current upper bound on normal force, shrunk/grown during ramps."""
    if state.phase == ENABLED:
        return spec.f_max
    if state.phase == RAMPING_IN:
        frac = min(1.0, state.ramp_elapsed / state.ramp_duration)
        return spec.f_max * frac
    if state.phase == RAMPING_OUT:
        frac = min(1.0, state.ramp_elapsed / state.ramp_duration)
        return state.captured_bound * (1.0 - frac)
    return 0.0


def contact_inequality_rows(spec: ContactSpec, state: ContactState, w, dt: float):
    """Linear rows (A, b) over the contact's wrench-rate entries.

    Rows guarantee that w + wdot*dt keeps every margin non-negative:
    A @ wdot + b >= 0, with b the current margin value.  Absolute values
    in the margin formulas expand into +/- row pairs.
    """
    if state.phase == DISABLED:
        raise ContactError(f"{spec.frame}: contact is disabled")
    w = np.asarray(w, dtype=float)
    dim = spec.wrench_dim
    mu = spec.friction / math.sqrt(2.0)
    cap = effective_force_cap(spec, state)

    def unit(i):
        e = np.zeros(dim)
        e[i] = 1.0
        return e

    ez = unit(2)
    rows = [
        (ez, w[2] - spec.f_min),
        (mu * ez - unit(0), mu * w[2] - w[0]),
        (mu * ez + unit(0), mu * w[2] + w[0]),
        (mu * ez - unit(1), mu * w[2] - w[1]),
        (mu * ez + unit(1), mu * w[2] + w[1]),
    ]
    if spec.kind == PLANE:
        X, Y = spec.cop_half_extents
        mt = spec.torsion_friction
        rows += [
            (Y * ez - unit(3), Y * w[2] - w[3]),
            (Y * ez + unit(3), Y * w[2] + w[3]),
            (X * ez - unit(4), X * w[2] - w[4]),
            (X * ez + unit(4), X * w[2] + w[4]),
            (mt * ez - unit(5), mt * w[2] - w[5]),
            (mt * ez + unit(5), mt * w[2] + w[5]),
        ]
    rows.append((-ez, cap - w[2]))
    A = np.array([dt * a for a, _ in rows])
    b = np.array([c for _, c in rows])
    return A, b


def switch_begin(state: ContactState, action: str, duration: float, current_f_z: float = 0.0) -> ContactState:
    """Start a contact addition or removal ramp."""
    if duration <= 0.0:
        raise ContactError("ramp duration must be > 0")
    if action == "add":
        if state.phase != DISABLED:
            raise ContactError(f"cannot add a contact in phase '{state.phase}'")
        return ContactState(RAMPING_IN, 0.0, duration, 0.0)
    if action == "remove":
        if state.phase != ENABLED:
            raise ContactError(f"cannot remove a contact in phase '{state.phase}'")
        return ContactState(RAMPING_OUT, 0.0, duration, float(current_f_z))
    raise ContactError(f"unknown switch action '{action}'")


def switch_tick(state: ContactState, dt: float, f_max: float = math.inf):
    """Advance a ramp by dt; returns (new state, current f_z upper bound).

    f_max is the contact's force cap, needed while ramping in.
    """
    if state.phase not in (RAMPING_IN, RAMPING_OUT):
        raise ContactError(f"no ramp in progress (phase '{state.phase}')")
    elapsed = min(state.ramp_duration, state.ramp_elapsed + dt)
    if elapsed >= state.ramp_duration:
        if state.phase == RAMPING_OUT:
            return ContactState(DISABLED), 0.0
        return ContactState(ENABLED), f_max
    new = replace(state, ramp_elapsed=elapsed)
    frac = elapsed / state.ramp_duration
    if state.phase == RAMPING_OUT:
        return new, state.captured_bound * (1.0 - frac)
    return new, f_max * frac
