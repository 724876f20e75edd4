"""Rigid-transform algebra: poses, twists, wrenches.

Conventions used throughout the package:

- quaternions are stored (w, x, y, z) and kept unit-norm,
- orientation errors are rotation vectors (axis * angle),
- twists are expressed in the world-aligned frame located at the body
  origin ("local-world-aligned"): linear part is the world velocity of
  the origin point, angular part is the world angular velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_QUAT_NORM_TOL = 1e-9


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite 3-vector")
    return a


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if n < _QUAT_NORM_TOL:
        raise ValueError("degenerate quaternion")
    q = q / n
    # canonical sign: w >= 0
    if q[0] < 0.0:
        q = -q
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    w, ux, uy, uz = q
    vx, vy, vz = v[0], v[1], v[2]
    # t = u x v + w v; result = v + 2 u x t  (expanded: np.cross is slow
    # for single vectors and this sits on the kinematics hot path)
    tx = uy * vz - uz * vy + w * vx
    ty = uz * vx - ux * vz + w * vy
    tz = ux * vy - uy * vx + w * vz
    return np.array(
        [
            vx + 2.0 * (uy * tz - uz * ty),
            vy + 2.0 * (uz * tx - ux * tz),
            vz + 2.0 * (ux * ty - uy * tx),
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_exp(rotvec: np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation vector (axis * angle)."""
    rotvec = np.asarray(rotvec, dtype=float).reshape(3)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        # first-order expansion, renormalized below
        q = np.array([1.0, 0.5 * rotvec[0], 0.5 * rotvec[1], 0.5 * rotvec[2]])
    else:
        axis = rotvec / angle
        s = math.sin(0.5 * angle)
        q = np.array([math.cos(0.5 * angle), s * axis[0], s * axis[1], s * axis[2]])
    return quat_normalize(q)


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector of a unit quaternion; angle in [0, pi].

    At the pi-rotation singularity the axis sign is fixed by the
    largest-magnitude vector component being positive.
    """
    q = quat_normalize(q)
    w = min(1.0, max(-1.0, q[0]))
    u = q[1:]
    s = np.linalg.norm(u)
    if s < 1e-12:
        if w > 0.0:
            return 2.0 * u  # small-angle limit
        # angle == pi exactly; deterministic axis pick
        axis = np.zeros(3)
        axis[int(np.argmax(np.abs(u))) if s > 0 else 0] = 1.0
        return math.pi * axis
    angle = 2.0 * math.atan2(s, w)
    axis = u / s
    if abs(angle - math.pi) < 1e-9:
        # +/-axis are equivalent at pi; largest-component rule picks one
        k = int(np.argmax(np.abs(axis)))
        if axis[k] < 0.0:
            axis = -axis
        angle = math.pi
    return angle * axis


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting cross product; np.cross is slow on small operands."""
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack(
        np.broadcast_arrays(ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx),
        axis=-1,
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (unit quaternion w,x,y,z) then translation."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def _trusted(position: np.ndarray, orientation: np.ndarray) -> "Pose":
        """Construct without copying/normalizing; internal hot paths only."""
        p = object.__new__(Pose)
        object.__setattr__(p, "position", position)
        object.__setattr__(p, "orientation", orientation)
        return p

    @staticmethod
    def from_rotvec(rotvec, position=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(position=np.asarray(position, dtype=float), orientation=quat_exp(np.asarray(rotvec, dtype=float)))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def apply(self, point) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, _as_vec3(point))

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.orientation)
        return Pose(position=-quat_rotate(qi, self.position), orientation=qi)

    def flat(self) -> list:
        """[px, py, pz, qw, qx, qy, qz] used by every file and wire format."""
        return [*self.position.tolist(), *self.orientation.tolist()]

    @staticmethod
    def from_flat(values) -> "Pose":
        a = np.asarray(values, dtype=float).reshape(7)
        return Pose(position=a[:3], orientation=a[3:])


@dataclass(frozen=True)
class Twist:
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "linear", _as_vec3(self.linear))
        object.__setattr__(self, "angular", _as_vec3(self.angular))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class Wrench:
    """Force/torque pair; at contacts expressed contact-local, z = surface normal."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "force", _as_vec3(self.force))
        object.__setattr__(self, "torque", _as_vec3(self.torque))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


def pose_compose(a: Pose, b: Pose) -> Pose:
    """a then b expressed in a's frame (a o b)."""
    # unit * unit stays unit to machine precision; skip renormalization
    return Pose._trusted(
        a.position + quat_rotate(a.orientation, b.position),
        quat_multiply(a.orientation, b.orientation),
    )


def pose_error_log(current: Pose, target: Pose) -> np.ndarray:
    """6-vector (dp, dtheta): world translation error and rotation-vector error.

    Zero iff the poses coincide; first-order consistent with twists from
    pose_integrate.
    """
    dp = target.position - current.position
    dq = quat_multiply(target.orientation, quat_conjugate(current.orientation))
    return np.concatenate([dp, quat_log(dq)])


def pose_integrate(p: Pose, v: Twist, dt: float) -> Pose:
    """Integrate a local-world-aligned twist over dt."""
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    return Pose(
        position=p.position + v.linear * dt,
        orientation=quat_multiply(quat_exp(v.angular * dt), p.orientation),
    )
