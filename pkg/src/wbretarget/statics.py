"""Static equation of motion and its analytical partial derivatives.

Equilibrium splits the generalized gravity/contact balance into the six
unactuated floating-base rows (the residual r_fb, which must vanish) and
the actuated rows, which define the joint torques:

    r_fb = G_fb(q) - (Jc^T lam)_fb
    tau  = G_act(q) - (Jc^T lam)_act

Jc stacks contact-local rows (plane contacts 6, point contacts 3).  The
derivatives with respect to the configuration tangent are computed
analytically by differentiating the moment-arm expressions; finite
differences exist only as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contacts import PLANE, ContactSet
from .geometry import cross3, skew
from .model import Configuration, Kinematics, RobotModel


@dataclass(frozen=True)
class StaticsResult:
    base_residual: np.ndarray  # (6,) when floating, (0,) otherwise
    joint_torques: np.ndarray  # (n,)


@dataclass(frozen=True)
class StaticsDerivatives:
    dr_dq: np.ndarray  # 6 x nv
    dr_dlam: np.ndarray  # 6 x m
    dtau_dq: np.ndarray  # n x nv
    dtau_dlam: np.ndarray  # n x m


def stacked_contact_jacobian(model: RobotModel, kin: Kinematics, contacts: ContactSet) -> np.ndarray:
    """Contact-local rows for every non-disabled contact, in set order."""
    key = tuple((e.spec.frame, dim) for e, _, dim in contacts.layout())
    cache = getattr(kin, "_contact_jac", None)
    if cache is None:
        cache = {}
        kin._contact_jac = cache
    if key in cache:
        return cache[key]
    blocks = []
    for e, _, dim in contacts.layout():
        J = kin.frame_jacobian(e.spec.frame)
        R = kin.pose_of(e.spec.frame).rotation()
        if dim == 6:
            blocks.append(np.vstack([R.T @ J[:3], R.T @ J[3:]]))
        else:
            blocks.append(R.T @ J[:3])
    J = np.vstack(blocks) if blocks else np.zeros((0, model.nv))
    cache[key] = J
    return J


def _check_lam(contacts: ContactSet, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if len(lam) != contacts.wrench_dim:
        raise ValueError(
            f"wrench vector has {len(lam)} entries, contact layout needs {contacts.wrench_dim}"
        )
    return lam


def statics_evaluate(
    model: RobotModel,
    contacts: ContactSet,
    cfg: Configuration,
    lam,
    kin: Kinematics | None = None,
) -> StaticsResult:
    lam = _check_lam(contacts, lam)
    if kin is None:
        kin = Kinematics(model, cfg)
    masses = np.array([l.mass for l in model.links])
    G = -np.einsum("l,lcd,c->d", masses, kin.all_com_jacobians(), model.gravity)
    full = G - stacked_contact_jacobian(model, kin, contacts).T @ lam
    if model.floating_base:
        return StaticsResult(full[:6], full[6:])
    return StaticsResult(np.zeros(0), full)


def _world_wrenches(kin: Kinematics, contacts: ContactSet, lam: np.ndarray):
    """Per active contact: (link index, point, world force, world torque)."""
    out = []
    for e, off, dim in contacts.layout():
        R = kin.pose_of(e.spec.frame).rotation()
        f = R @ lam[off : off + 3]
        tau = R @ lam[off + 3 : off + 6] if dim == 6 else np.zeros(3)
        out.append((kin.link_of_frame(e.spec.frame), kin.pose_of(e.spec.frame).position, f, tau))
    return out


def _applied_wrench_gradient(
    kin: Kinematics,
    link_idx: int,
    point: np.ndarray,
    f: np.ndarray,
    tau: np.ndarray,
    rotates_with_link: bool,
) -> np.ndarray:
    """d/dq of the generalized force J_f(q)^T w for a wrench at a link point.

    When rotates_with_link is set, w is fixed in the link frame (contact
    wrenches); otherwise it is fixed in the world frame (gravity).
    """
    m = kin.model
    off = 6 if m.floating_base else 0
    D = np.zeros((m.nv, m.nv))
    ANG = kin.all_angular_jacobians()
    JPJ = kin.joint_origin_jacobians()
    P_f = kin.point_jacobian(link_idx, point)
    L = ANG[link_idx]
    sf = skew(f)
    if m.floating_base:
        # base linear rows: g = f
        if rotates_with_link:
            D[0:3] = -sf @ L
        # base angular rows: g = (p - p_b) x f + tau
        P_b = np.zeros((3, m.nv))
        P_b[:, 0:3] = np.eye(3)
        D[3:6] = -sf @ (P_f - P_b)
        if rotates_with_link:
            D[3:6] += skew(point - kin.base_origin) @ (-sf) @ L - skew(tau) @ L
    moved_by = np.nonzero(m._moves[link_idx])[0]
    if moved_by.size == 0:
        return D
    cl = np.array([m.link_index[j.child] for j in m.actuated], dtype=int)
    rev = moved_by[kin._revolute[moved_by]]
    pri = moved_by[~kin._revolute[moved_by]]
    if rev.size:
        ax = kin.joint_axis[rev]  # (k, 3)
        r = point - kin.joint_pos[rev]
        c = cross3(r, f) + tau
        rows = np.einsum("ki,kid->kd", cross3(ax, c), ANG[cl[rev]])
        rows -= np.einsum("ki,kid->kd", ax @ sf, P_f[None] - JPJ[rev])
        if rotates_with_link:
            # a^T skew(r) == cross(a, r) as a row vector
            rows += (cross3(ax, r) @ (-sf) - cross3(ax, tau)) @ L
        D[off + rev] = rows
    if pri.size:
        ax = kin.joint_axis[pri]
        rows = np.einsum("ki,kid->kd", cross3(ax, f), ANG[cl[pri]])
        if rotates_with_link:
            rows += ax @ (-sf) @ L
        D[off + pri] = rows
    return D


def _gravity_gradient(model: RobotModel, kin: Kinematics) -> np.ndarray:
    """dG/dq, summed over all link COM contributions (world-fixed forces)."""
    m = model
    off = 6 if m.floating_base else 0
    D = np.zeros((m.nv, m.nv))
    masses = np.array([l.mass for l in m.links])
    forces = -masses[:, None] * m.gravity[None, :]  # G = sum J_com^T f
    com = kin.com_world
    COMJ = kin.all_com_jacobians()
    JPJ = kin.joint_origin_jacobians()
    ANG = kin.all_angular_jacobians()
    SKF = np.einsum("lij,ljd->lid", _skew_batch(forces), COMJ)  # skew(f_l) @ P_l
    if m.floating_base:
        F_tot = forces.sum(axis=0)
        D[3:6] = -SKF.sum(axis=0)
        D[3:6, 0:3] += skew(F_tot)
    if m.n == 0:
        return D
    cl = np.array([m.link_index[j.child] for j in m.actuated], dtype=int)
    ax = kin.joint_axis  # (n, 3)
    moves = m._moves.astype(float)  # (L, n)
    F_sum = moves.T @ forces  # (n, 3) descendant force sums
    cross_cf = cross3(com, forces)  # (L, 3)
    c_sum = moves.T @ cross_cf - cross3(kin.joint_pos, F_sum)
    SKF_sum = np.einsum("la,lid->aid", moves, SKF)
    rows = np.einsum("ai,aid->ad", cross3(ax, c_sum), ANG[cl])
    rows -= np.einsum("ai,aid->ad", ax, SKF_sum)
    # a^T skew(F) == cross(a, F) as a row vector
    rows += np.einsum("ai,aid->ad", cross3(ax, F_sum), JPJ)
    rows_pri = np.einsum("ai,aid->ad", cross3(ax, F_sum), ANG[cl])
    D[off:] = np.where(kin._revolute[:, None], rows, rows_pri)
    return D


def _skew_batch(v: np.ndarray) -> np.ndarray:
    out = np.zeros((v.shape[0], 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def statics_derivatives(
    model: RobotModel,
    contacts: ContactSet,
    cfg: Configuration,
    lam,
    kin: Kinematics | None = None,
) -> StaticsDerivatives:
    lam = _check_lam(contacts, lam)
    if kin is None:
        kin = Kinematics(model, cfg)
    Jc = stacked_contact_jacobian(model, kin, contacts)
    dfull_dlam = -Jc.T
    dfull_dq = _gravity_gradient(model, kin)
    for link_idx, point, f, tau in _world_wrenches(kin, contacts, lam):
        dfull_dq -= _applied_wrench_gradient(kin, link_idx, point, f, tau, True)
    if model.floating_base:
        return StaticsDerivatives(dfull_dq[:6], dfull_dlam[:6], dfull_dq[6:], dfull_dlam[6:])
    empty = np.zeros((0, model.nv)), np.zeros((0, lam.shape[0]))
    return StaticsDerivatives(empty[0], empty[1], dfull_dq, dfull_dlam)
