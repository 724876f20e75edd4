"""Robot description ingestion and kinematics.

Supports a deliberately small URDF subset: links with point masses,
revolute/prismatic/fixed joints, a ``<frame>`` extension element for named
attachment points, and a ``floating="true"`` attribute on ``<robot>``.
Meshes, collision geometry and dynamics tags are ignored.
"""

from __future__ import annotations

import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    cross3,
    Pose,
    pose_compose,
    quat_exp,
    quat_multiply,
    quat_rotate,
    skew,
)


class ModelError(ValueError):
    """Robot description failed validation; message carries the element path."""


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray  # in link frame


@dataclass(frozen=True)
class Joint:
    name: str
    joint_type: str  # revolute | prismatic | fixed
    parent: str
    child: str
    origin: Pose
    axis: np.ndarray
    lower: float = 0.0
    upper: float = 0.0
    velocity_max: float = 0.0
    effort_max: float = 0.0


@dataclass(frozen=True)
class FrameDef:
    name: str
    parent: str
    origin: Pose


def _rpy_quat(r: float, p: float, y: float) -> np.ndarray:
    # intrinsic XYZ
    qx = quat_exp(np.array([r, 0.0, 0.0]))
    qy = quat_exp(np.array([0.0, p, 0.0]))
    qz = quat_exp(np.array([0.0, 0.0, y]))
    return quat_multiply(quat_multiply(qx, qy), qz)


def _origin_pose(elem, path: str) -> Pose:
    if elem is None:
        return Pose.identity()
    xyz = [float(v) for v in elem.get("xyz", "0 0 0").split()]
    rpy = [float(v) for v in elem.get("rpy", "0 0 0").split()]
    if len(xyz) != 3 or len(rpy) != 3:
        raise ModelError(f"{path}: origin needs 3 xyz and 3 rpy values")
    return Pose(position=np.array(xyz), orientation=_rpy_quat(*rpy))


class RobotModel:
    """Immutable kinematic tree with point masses, limits and named frames."""

    def __init__(self, name, links, joints, frames, floating_base, gravity=(0.0, 0.0, -9.81)):
        self.name = name
        self.links = list(links)
        self.joints = list(joints)
        self.frames = list(frames)
        self.floating_base = bool(floating_base)
        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        self._validate()
        self._index()

    # -- structure -----------------------------------------------------

    def _validate(self):
        link_names = [l.name for l in self.links]
        if len(set(link_names)) != len(link_names):
            raise ModelError("duplicate link name")
        link_set = set(link_names)
        children = set()
        for j in self.joints:
            if j.parent not in link_set:
                raise ModelError(f"joint/{j.name}: unknown parent link '{j.parent}'")
            if j.child not in link_set:
                raise ModelError(f"joint/{j.name}: unknown child link '{j.child}'")
            if j.child in children:
                raise ModelError(f"joint/{j.name}: link '{j.child}' has two parent joints")
            children.add(j.child)
            if j.joint_type not in ("revolute", "prismatic", "fixed"):
                raise ModelError(f"joint/{j.name}: unsupported type '{j.joint_type}'")
            if j.joint_type != "fixed":
                if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                    raise ModelError(f"joint/{j.name}: axis must be unit-norm")
                if j.lower > j.upper:
                    raise ModelError(f"joint/{j.name}: lower > upper")
                if j.velocity_max <= 0.0 or j.effort_max <= 0.0:
                    raise ModelError(f"joint/{j.name}: velocity and effort limits must be > 0")
        roots = [n for n in link_names if n not in children]
        if len(roots) != 1:
            raise ModelError(f"tree must have exactly one root, found {roots}")
        self.root = roots[0]
        # cycle / reachability check
        adj = {}
        for j in self.joints:
            adj.setdefault(j.parent, []).append(j.child)
        seen = set()
        stack = [self.root]
        while stack:
            n = stack.pop()
            if n in seen:
                raise ModelError(f"cycle detected at link '{n}'")
            seen.add(n)
            stack.extend(adj.get(n, []))
        if seen != link_set:
            raise ModelError(f"links not reachable from root: {sorted(link_set - seen)}")
        for l in self.links:
            if l.mass <= 0.0:
                raise ModelError(f"link/{l.name}: mass must be > 0")
        frame_names = set()
        for f in self.frames:
            if f.parent not in link_set:
                raise ModelError(f"frame/{f.name}: unknown parent link '{f.parent}'")
            if f.name in frame_names or f.name in link_set:
                raise ModelError(f"frame/{f.name}: duplicate name")
            frame_names.add(f.name)

    def _index(self):
        self.link_index = {l.name: i for i, l in enumerate(self.links)}
        self.frame_defs = {f.name: f for f in self.frames}
        self.actuated = [j for j in self.joints if j.joint_type != "fixed"]
        self.joint_index = {j.name: i for i, j in enumerate(self.actuated)}
        self.n = len(self.actuated)
        self.nv = (6 if self.floating_base else 0) + self.n
        self.total_mass = sum(l.mass for l in self.links)
        self._parent_joint = {j.child: j for j in self.joints}
        # root-to-link joint chains (all joints, in order)
        self._chain = {self.root: []}
        pending = [j for j in self.joints]
        while pending:
            rest = []
            for j in pending:
                if j.parent in self._chain:
                    self._chain[j.child] = self._chain[j.parent] + [j]
                else:
                    rest.append(j)
            pending = rest
        self.tree_depth = max(len(c) for c in self._chain.values()) if self._chain else 0
        self.joint_lower = np.array([j.lower for j in self.actuated])
        self.joint_upper = np.array([j.upper for j in self.actuated])
        self.joint_velocity_max = np.array([j.velocity_max for j in self.actuated])
        self.joint_effort_max = np.array([j.effort_max for j in self.actuated])
        # ancestor mask: moves[l, a] = actuated joint a is on the chain to link l
        L, n = len(self.links), self.n
        self._moves = np.zeros((L, n), dtype=bool)
        for lname, chain in self._chain.items():
            li = self.link_index[lname]
            for j in chain:
                if j.joint_type != "fixed":
                    self._moves[li, self.joint_index[j.name]] = True

    def frame_names(self):
        return [l.name for l in self.links] + [f.name for f in self.frames]

    def default_configuration(self) -> "Configuration":
        q = np.clip(np.zeros(self.n), self.joint_lower, self.joint_upper)
        return Configuration(base_pose=Pose.identity(), joint_positions=q)


@dataclass(frozen=True)
class Configuration:
    base_pose: Pose = field(default_factory=Pose.identity)
    joint_positions: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(
            self, "joint_positions", np.asarray(self.joint_positions, dtype=float).reshape(-1).copy()
        )

    def check(self, model: RobotModel):
        if len(self.joint_positions) != model.n:
            raise ModelError(
                f"configuration has {len(self.joint_positions)} joints, model has {model.n}"
            )


def integrate_configuration(model: RobotModel, cfg: Configuration, velocity: np.ndarray, dt: float) -> Configuration:
    """Integrate a generalized velocity (base twist then joint rates) over dt."""
    from .geometry import Twist, pose_integrate

    velocity = np.asarray(velocity, dtype=float)
    if model.floating_base:
        base = pose_integrate(cfg.base_pose, Twist(velocity[:3], velocity[3:6]), dt)
        dq = velocity[6:]
    else:
        base = cfg.base_pose
        dq = velocity
    return Configuration(base_pose=base, joint_positions=cfg.joint_positions + dq * dt)


# ---------------------------------------------------------------------------
# parsing


def parse_robot_description(text: str) -> RobotModel:
    """Parse the URDF subset documented in the package README."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise ModelError(f"malformed XML: {e}") from e
    if root.tag != "robot":
        raise ModelError(f"expected <robot> root element, got <{root.tag}>")
    name = root.get("name", "robot")
    floating = root.get("floating", "false").lower() in ("true", "1")

    links, joints, frames = [], [], []
    for elem in root:
        if elem.tag == "link":
            lname = elem.get("name")
            if lname is None:
                raise ModelError("link: missing name attribute")
            inertial = elem.find("inertial")
            if inertial is None or inertial.find("mass") is None:
                raise ModelError(f"link/{lname}: missing <inertial><mass value=...>")
            mass = float(inertial.find("mass").get("value"))
            com = _origin_pose(inertial.find("origin"), f"link/{lname}/inertial").position
            for child in elem:
                if child.tag not in ("inertial",):
                    warnings.warn(f"link/{lname}: ignoring <{child.tag}>")
            links.append(Link(lname, mass, com))
        elif elem.tag == "joint":
            jname = elem.get("name")
            jtype = elem.get("type")
            if jname is None or jtype is None:
                raise ModelError("joint: missing name or type attribute")
            parent = elem.find("parent")
            child = elem.find("child")
            if parent is None or child is None:
                raise ModelError(f"joint/{jname}: missing <parent> or <child>")
            origin = _origin_pose(elem.find("origin"), f"joint/{jname}")
            axis_elem = elem.find("axis")
            axis = np.array([1.0, 0.0, 0.0])
            if axis_elem is not None:
                axis = np.array([float(v) for v in axis_elem.get("xyz", "1 0 0").split()])
            lower = upper = vel = eff = 0.0
            if jtype != "fixed":
                limit = elem.find("limit")
                if limit is None:
                    raise ModelError(f"joint/{jname}: {jtype} joint requires <limit>")
                lower = float(limit.get("lower"))
                upper = float(limit.get("upper"))
                vel = float(limit.get("velocity"))
                eff = float(limit.get("effort"))
            joints.append(
                Joint(jname, jtype, parent.get("link"), child.get("link"), origin, axis, lower, upper, vel, eff)
            )
        elif elem.tag == "frame":
            fname = elem.get("name")
            fparent = elem.get("parent")
            if fname is None or fparent is None:
                raise ModelError("frame: missing name or parent attribute")
            xyz = [float(v) for v in elem.get("xyz", "0 0 0").split()]
            rpy = [float(v) for v in elem.get("rpy", "0 0 0").split()]
            frames.append(FrameDef(fname, fparent, Pose(np.array(xyz), _rpy_quat(*rpy))))
        else:
            warnings.warn(f"ignoring unsupported element <{elem.tag}>")

    return RobotModel(name, links, joints, frames, floating)


# ---------------------------------------------------------------------------
# kinematics


class Kinematics:
    """Forward-kinematics snapshot with cached per-joint world quantities."""

    def __init__(self, model: RobotModel, cfg: Configuration):
        cfg.check(model)
        self.model = model
        self.cfg = cfg
        self.link_pose: dict[str, Pose] = {}
        self.frame_pose: dict[str, Pose] = {}
        # world position / axis of every actuated joint
        self.joint_pos = np.zeros((model.n, 3))
        self.joint_axis = np.zeros((model.n, 3))
        self._frame_jac: dict[str, np.ndarray] = {}
        self._compute()

    def _compute(self):
        m = self.model
        base = self.cfg.base_pose if m.floating_base else Pose.identity()
        self.base_origin = base.position
        self.link_pose[m.root] = base
        order = sorted(m._chain, key=lambda l: len(m._chain[l]))
        for lname in order:
            chain = m._chain[lname]
            if not chain:
                continue
            j = chain[-1]
            parent_pose = self.link_pose[j.parent]
            pose = pose_compose(parent_pose, j.origin)
            if j.joint_type != "fixed":
                idx = m.joint_index[j.name]
                # joint origin and axis are unaffected by the joint's own motion
                self.joint_pos[idx] = pose.position
                self.joint_axis[idx] = quat_rotate(pose.orientation, j.axis)
                qj = self.cfg.joint_positions[idx]
                if j.joint_type == "revolute":
                    motion = Pose(orientation=quat_exp(j.axis * qj))
                else:
                    motion = Pose(position=j.axis * qj)
                pose = pose_compose(pose, motion)
            self.link_pose[lname] = pose
        for f in m.frames:
            self.frame_pose[f.name] = pose_compose(self.link_pose[f.parent], f.origin)
        # per-link world COM positions
        self.com_world = np.array(
            [self.link_pose[l.name].apply(l.com) for l in m.links]
        )
        self._revolute = np.array([j.joint_type == "revolute" for j in m.actuated], dtype=bool)

    def pose_of(self, frame: str) -> Pose:
        if frame in self.frame_pose:
            return self.frame_pose[frame]
        if frame in self.link_pose:
            return self.link_pose[frame]
        raise ModelError(f"unknown frame '{frame}'")

    def link_of_frame(self, frame: str) -> int:
        m = self.model
        if frame in m.frame_defs:
            return m.link_index[m.frame_defs[frame].parent]
        if frame in m.link_index:
            return m.link_index[frame]
        raise ModelError(f"unknown frame '{frame}'")

    # -- jacobians -----------------------------------------------------

    def point_jacobian(self, link_idx: int, point_world: np.ndarray) -> np.ndarray:
        """3 x nv linear Jacobian of a point rigidly attached to a link."""
        m = self.model
        J = np.zeros((3, m.nv))
        off = 6 if m.floating_base else 0
        if m.floating_base:
            J[:, 0:3] = np.eye(3)
            J[:, 3:6] = -skew(point_world - self.base_origin)
        idx = np.nonzero(m._moves[link_idx])[0]
        if idx.size:
            cols = np.where(
                self._revolute[idx, None],
                cross3(self.joint_axis[idx], point_world - self.joint_pos[idx]),
                self.joint_axis[idx],
            )
            J[:, off + idx] = cols.T
        return J

    def angular_jacobian(self, link_idx: int) -> np.ndarray:
        """3 x nv angular (world) Jacobian of a link."""
        m = self.model
        J = np.zeros((3, m.nv))
        off = 6 if m.floating_base else 0
        if m.floating_base:
            J[:, 3:6] = np.eye(3)
        idx = np.nonzero(m._moves[link_idx] & self._revolute)[0]
        J[:, off + idx] = self.joint_axis[idx].T
        return J

    def frame_jacobian(self, frame: str) -> np.ndarray:
        """6 x nv local-world-aligned frame Jacobian, rows (linear; angular)."""
        cached = self._frame_jac.get(frame)
        if cached is not None:
            return cached
        li = self.link_of_frame(frame)
        p = self.pose_of(frame).position
        J = np.vstack([self.point_jacobian(li, p), self.angular_jacobian(li)])
        self._frame_jac[frame] = J
        return J

    # -- cached jacobian stacks (used by the statics derivatives) ------

    def _base_blocks(self, points: np.ndarray, J: np.ndarray):
        if not self.model.floating_base:
            return
        J[:, :, 0:3] = np.eye(3)
        rel = points - self.base_origin
        for i in range(J.shape[0]):
            J[i, :, 3:6] = -skew(rel[i])

    def all_angular_jacobians(self) -> np.ndarray:
        """(L, 3, nv) angular Jacobian of every link."""
        if not hasattr(self, "_ANG"):
            m = self.model
            off = 6 if m.floating_base else 0
            L = len(m.links)
            J = np.zeros((L, 3, m.nv))
            if m.floating_base:
                J[:, :, 3:6] = np.eye(3)
            mask = m._moves & self._revolute[None, :]
            J[:, :, off:] = mask[:, None, :] * self.joint_axis.T[None, :, :]
            self._ANG = J
        return self._ANG

    def all_com_jacobians(self) -> np.ndarray:
        """(L, 3, nv) linear Jacobian of every link COM."""
        if not hasattr(self, "_COMJ"):
            self._COMJ = self._point_jacobian_stack(self.com_world, self.model._moves)
        return self._COMJ

    def joint_origin_jacobians(self) -> np.ndarray:
        """(n, 3, nv) linear Jacobian of every actuated joint's origin point."""
        if not hasattr(self, "_JPJ"):
            m = self.model
            cl = np.array([m.link_index[j.child] for j in m.actuated], dtype=int)
            self._JPJ = self._point_jacobian_stack(self.joint_pos, m._moves[cl])
        return self._JPJ

    def _point_jacobian_stack(self, points: np.ndarray, mask: np.ndarray) -> np.ndarray:
        m = self.model
        off = 6 if m.floating_base else 0
        K = points.shape[0]
        J = np.zeros((K, 3, m.nv))
        self._base_blocks(points, J)
        diff = points[:, None, :] - self.joint_pos[None, :, :]
        cols = np.where(
            self._revolute[None, :, None],
            cross3(self.joint_axis[None, :, :], diff),
            self.joint_axis[None, :, :],
        )
        cols = cols * mask[:, :, None]
        J[:, :, off:] = cols.transpose(0, 2, 1)
        return J


def forward_kinematics(model: RobotModel, cfg: Configuration) -> dict:
    """World pose of every link and named frame."""
    kin = Kinematics(model, cfg)
    out = dict(kin.link_pose)
    out.update(kin.frame_pose)
    return out


def frame_jacobian(model: RobotModel, cfg: Configuration, frame: str) -> np.ndarray:
    return Kinematics(model, cfg).frame_jacobian(frame)


def potential_energy(model: RobotModel, cfg: Configuration) -> float:
    kin = Kinematics(model, cfg)
    masses = np.array([l.mass for l in model.links])
    return -float(np.sum(masses * (kin.com_world @ model.gravity)))


def gravity_vector(model: RobotModel, cfg: Configuration, kin: Kinematics | None = None) -> np.ndarray:
    """Generalized gravity vector G(q) = dU/dq in the local-world-aligned chart."""
    if kin is None:
        kin = Kinematics(model, cfg)
    G = np.zeros(model.nv)
    for i, l in enumerate(model.links):
        P = kin.point_jacobian(i, kin.com_world[i])
        G -= l.mass * (P.T @ model.gravity)
    return G
