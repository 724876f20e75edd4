import numpy as np
import pytest

from conftest import central_difference, random_configuration, rel_err
from wbretarget.contacts import ContactSet, ContactSpec, ContactState, ENABLED, POINT
from wbretarget.model import Configuration, Kinematics, gravity_vector
from wbretarget.statics import (
    stacked_contact_jacobian,
    statics_derivatives,
    statics_evaluate,
)


def enabled(spec):
    from wbretarget.contacts import ContactEntry

    return ContactEntry(spec, ContactState(phase=ENABLED))


def box_contacts():
    return ContactSet([enabled(ContactSpec(frame="foot", cop_half_extents=(0.15, 0.15)))])


def test_box_equilibrium_residual_zero(models):
    m = models["box.urdf"]
    cfg = Configuration()
    lam = np.array([0, 0, m.total_mass * 9.81, 0, 0, 0])
    res = statics_evaluate(m, box_contacts(), cfg, lam)
    # foot sits under the COM x/y: pure vertical force balances exactly
    assert np.linalg.norm(res.base_residual) <= 1e-9


def test_box_zero_wrench_reduces_to_gravity(models):
    m = models["box.urdf"]
    cfg = Configuration()
    res = statics_evaluate(m, box_contacts(), cfg, np.zeros(6))
    assert np.allclose(res.base_residual, gravity_vector(m, cfg), atol=1e-12)
    assert abs(res.base_residual[2] - m.total_mass * 9.81) < 1e-9


def test_fixed_base_arm_contact_torque(models):
    m = models["twolink.urdf"]
    cfg = Configuration(joint_positions=[0.0, 0.0])
    contacts = ContactSet([enabled(ContactSpec(frame="hand", kind=POINT))])
    free = statics_evaluate(m, contacts, cfg, np.zeros(3))
    pressing = statics_evaluate(m, contacts, cfg, np.array([0.0, 0.0, -10.0]))
    # hand pushes down 10 N at reach 1 m: shoulder sees the extra moment
    assert abs(pressing.joint_torques[0] - (free.joint_torques[0] + 10.0 * 1.0)) < 1e-9


def test_no_contact_fixed_base_equals_gravity(models):
    m = models["dualarm.urdf"]
    rng = np.random.default_rng(10)
    cfg = random_configuration(m, rng)
    res = statics_evaluate(m, ContactSet(), cfg, np.zeros(0))
    assert res.base_residual.size == 0
    assert np.allclose(res.joint_torques, gravity_vector(m, cfg), atol=1e-12)


def test_lambda_linearity(models):
    m = models["biped.urdf"]
    rng = np.random.default_rng(11)
    cfg = random_configuration(m, rng)
    contacts = ContactSet(
        [
            enabled(ContactSpec(frame="l_foot")),
            enabled(ContactSpec(frame="r_hand", kind=POINT)),
        ]
    )
    l1 = rng.uniform(-50, 50, 9)
    l2 = rng.uniform(-50, 50, 9)
    a, b = 0.7, -1.3

    def full(lam):
        r = statics_evaluate(m, contacts, cfg, lam)
        return np.concatenate([r.base_residual, r.joint_torques])

    lhs = full(a * l1 + b * l2)
    rhs = a * full(l1) + b * full(l2) - (a + b - 1) * full(np.zeros(9))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_dlam_is_minus_jacobian_transpose(models):
    m = models["biped.urdf"]
    rng = np.random.default_rng(12)
    cfg = random_configuration(m, rng)
    contacts = ContactSet(
        [enabled(ContactSpec(frame="l_foot")), enabled(ContactSpec(frame="r_foot"))]
    )
    lam = rng.uniform(-100, 100, 12)
    d = statics_derivatives(m, contacts, cfg, lam)
    Jc = stacked_contact_jacobian(m, Kinematics(m, cfg), contacts)
    assert np.array_equal(d.dr_dlam, -Jc.T[:6])
    assert np.array_equal(d.dtau_dlam, -Jc.T[6:])


def test_pendulum_dtau_dq_analytic(models):
    m = models["pendulum.urdf"]
    cfg = Configuration(joint_positions=[0.3])
    d = statics_derivatives(m, ContactSet(), cfg, np.zeros(0))
    # d(m g l cos q)/dq = -m g l sin q
    assert abs(d.dtau_dq[0, 0] - (-2.0 * 9.81 * 0.5 * np.sin(0.3))) < 1e-9


CONTACT_SETS = {
    "pendulum.urdf": [ContactSpec(frame="tip", kind=POINT)],
    "twolink.urdf": [ContactSpec(frame="hand", kind=POINT)],
    "box.urdf": [ContactSpec(frame="foot"), ContactSpec(frame="handle", kind=POINT)],
    "dualarm.urdf": [
        ContactSpec(frame="l_hand_frame"),
        ContactSpec(frame="r_hand_frame", kind=POINT),
    ],
    "biped.urdf": [
        ContactSpec(frame="l_foot"),
        ContactSpec(frame="r_foot"),
        ContactSpec(frame="l_hand", kind=POINT),
        ContactSpec(frame="r_hand", kind=POINT),
    ],
}


@pytest.mark.parametrize("name", sorted(CONTACT_SETS))
def test_derivatives_match_finite_differences(models, name):
    m = models[name]
    contacts = ContactSet([enabled(s) for s in CONTACT_SETS[name]])
    mdim = contacts.wrench_dim
    rng = np.random.default_rng(13)
    for _ in range(20):
        cfg = random_configuration(m, rng)
        lam = rng.uniform(-80, 80, mdim)
        d = statics_derivatives(m, contacts, cfg, lam)
        dq = np.vstack([d.dr_dq, d.dtau_dq])

        def full(c):
            r = statics_evaluate(m, contacts, c, lam)
            return np.concatenate([r.base_residual, r.joint_torques])

        fd = central_difference(m, cfg, full)
        assert rel_err(dq, fd) <= 1e-4
