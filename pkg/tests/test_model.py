import math

import numpy as np
import pytest

from conftest import central_difference, random_configuration, rel_err
from wbretarget.geometry import Pose, pose_compose
from wbretarget.model import (
    Configuration,
    Kinematics,
    ModelError,
    forward_kinematics,
    frame_jacobian,
    gravity_vector,
    parse_robot_description,
    potential_energy,
)

SINGLE = """
<robot name="single">
  <link name="base"><inertial><mass value="1.0"/></inertial></link>
  <link name="arm"><inertial><mass value="2.0"/></inertial></link>
  <joint name="j" type="revolute">
    <parent link="base"/><child link="arm"/>
    <origin xyz="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-1.5" upper="1.5" velocity="2.0" effort="10.0"/>
  </joint>
  <frame name="tip" parent="arm" xyz="1 0 0"/>
</robot>
"""


def test_parse_single_joint():
    m = parse_robot_description(SINGLE)
    assert m.n == 1
    assert m.joint_lower[0] == -1.5 and m.joint_upper[0] == 1.5
    assert m.actuated[0].name == "j"
    assert not m.floating_base


def test_parse_cycle_rejected():
    bad = SINGLE.replace('<parent link="base"/>', '<parent link="arm"/>')
    with pytest.raises(ModelError):
        parse_robot_description(bad)


def test_parse_missing_limit_rejected():
    bad = SINGLE.replace('<limit lower="-1.5" upper="1.5" velocity="2.0" effort="10.0"/>', "")
    with pytest.raises(ModelError, match="limit"):
        parse_robot_description(bad)


def test_parse_malformed_xml():
    with pytest.raises(ModelError, match="malformed"):
        parse_robot_description("<robot name='x'")


def test_parse_unknown_parent():
    bad = SINGLE.replace('<parent link="base"/>', '<parent link="nope"/>')
    with pytest.raises(ModelError, match="nope"):
        parse_robot_description(bad)


def test_shipped_biped_counts(models):
    m = models["biped.urdf"]
    assert m.n == 21
    assert m.floating_base
    # deepest chain is a 6-joint leg
    assert m.tree_depth == 6


def test_fk_zero_configuration_chains(models):
    m = models["twolink.urdf"]
    poses = forward_kinematics(m, m.default_configuration())
    assert np.allclose(poses["upper"].position, [0, 0, 0])
    assert np.allclose(poses["fore"].position, [0.5, 0, 0])
    assert np.allclose(poses["hand"].position, [1.0, 0, 0])


def test_fk_single_revolute_rotation():
    m = parse_robot_description(SINGLE)
    poses = forward_kinematics(m, Configuration(joint_positions=[math.pi / 2]))
    assert np.allclose(poses["tip"].position, [0, 1, 0], atol=1e-12)


def test_fk_base_equivariance(models):
    m = models["biped.urdf"]
    rng = np.random.default_rng(3)
    cfg = random_configuration(m, rng)
    shift = Pose(position=[0, 0, 0.5])
    shifted = Configuration(
        base_pose=pose_compose(shift, cfg.base_pose), joint_positions=cfg.joint_positions
    )
    a = forward_kinematics(m, cfg)
    b = forward_kinematics(m, shifted)
    for name in a:
        assert np.allclose(b[name].position, a[name].position + [0, 0, 0.5], atol=1e-12)


def test_fk_left_rigid_motion_equivariance(models):
    m = models["box.urdf"]
    rng = np.random.default_rng(4)
    cfg = random_configuration(m, rng)
    T = Pose(position=rng.uniform(-1, 1, 3), orientation=rng.normal(size=4))
    shifted = Configuration(base_pose=pose_compose(T, cfg.base_pose))
    a = forward_kinematics(m, cfg)
    b = forward_kinematics(m, shifted)
    for name in a:
        assert np.allclose(b[name].position, T.apply(a[name].position), atol=1e-12)


def test_jacobian_single_revolute_column():
    m = parse_robot_description(SINGLE)
    J = frame_jacobian(m, Configuration(joint_positions=[0.0]), "tip")
    assert np.allclose(J[:, 0], [0, 1, 0, 0, 0, 1], atol=1e-12)


def test_jacobian_base_linear_identity(models):
    m = models["biped.urdf"]
    rng = np.random.default_rng(5)
    cfg = random_configuration(m, rng)
    J = frame_jacobian(m, cfg, "l_hand")
    assert np.allclose(J[:3, :3], np.eye(3))


def test_jacobian_unknown_frame(models):
    with pytest.raises(ModelError, match="unknown frame"):
        frame_jacobian(models["biped.urdf"], models["biped.urdf"].default_configuration(), "nope")


def fd_frame_jacobian(model, cfg, frame, h=1e-6):
    from wbretarget.geometry import pose_error_log

    kin0 = Kinematics(model, cfg)
    p0 = kin0.pose_of(frame)

    def fn(c):
        p = Kinematics(model, c).pose_of(frame)
        return pose_error_log(p0, p)

    return central_difference(model, cfg, fn, h)


@pytest.mark.parametrize("name", ["pendulum.urdf", "twolink.urdf", "box.urdf", "dualarm.urdf", "biped.urdf"])
def test_jacobian_matches_finite_differences(models, name):
    m = models[name]
    rng = np.random.default_rng(6)
    frames = [f.name for f in m.frames] or [m.links[-1].name]
    for _ in range(20):
        cfg = random_configuration(m, rng)
        for frame in frames:
            J = frame_jacobian(m, cfg, frame)
            Jfd = fd_frame_jacobian(m, cfg, frame)
            assert rel_err(J, Jfd) <= 1e-4


def test_gravity_pendulum_analytic(models):
    m = models["pendulum.urdf"]
    G = gravity_vector(m, Configuration(joint_positions=[0.0]))
    assert abs(G[0] - 2.0 * 9.81 * 0.5) < 1e-9
    G = gravity_vector(m, Configuration(joint_positions=[math.pi / 2]))
    assert abs(G[0]) < 1e-9


@pytest.mark.parametrize("name", ["pendulum.urdf", "twolink.urdf", "box.urdf", "dualarm.urdf", "biped.urdf"])
def test_gravity_matches_potential_energy_fd(models, name):
    m = models[name]
    rng = np.random.default_rng(7)
    for _ in range(20):
        cfg = random_configuration(m, rng)
        G = gravity_vector(m, cfg)
        Gfd = central_difference(m, cfg, lambda c: potential_energy(m, c)).reshape(-1)
        assert rel_err(G, Gfd) <= 1e-4


def test_gravity_base_rows_total_weight(models):
    m = models["biped.urdf"]
    rng = np.random.default_rng(8)
    cfg = random_configuration(m, rng)
    G = gravity_vector(m, cfg)
    assert np.allclose(G[:3], [0, 0, m.total_mass * 9.81], atol=1e-9)
