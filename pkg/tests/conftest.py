import numpy as np
import pytest

from wbretarget.model import Configuration, integrate_configuration
from wbretarget.resources import load_fixture_model

FIXTURES = ["pendulum.urdf", "twolink.urdf", "box.urdf", "dualarm.urdf", "biped.urdf"]


@pytest.fixture(scope="session")
def models():
    return {name: load_fixture_model(name) for name in FIXTURES}


def random_configuration(model, rng, spread=0.7):
    from wbretarget.geometry import Pose

    q = rng.uniform(
        np.maximum(model.joint_lower, -spread), np.minimum(model.joint_upper, spread)
    )
    if model.floating_base:
        base = Pose(position=rng.uniform(-0.5, 0.5, 3), orientation=rng.normal(size=4))
    else:
        base = Pose.identity()
    return Configuration(base_pose=base, joint_positions=q)


def tangent_basis(model):
    return np.eye(model.nv)


def central_difference(model, cfg, fn, h=1e-6):
    """Columns: central differences of fn along every tangent direction."""
    cols = []
    for v in tangent_basis(model):
        fp = fn(integrate_configuration(model, cfg, v, h))
        fm = fn(integrate_configuration(model, cfg, -v, h))
        cols.append((np.asarray(fp) - np.asarray(fm)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(b)))


@pytest.fixture(scope="session")
def shipped_traces():
    """Every shipped scenario, run once per session: name -> (Scenario, Trace)."""
    from wbretarget.resources import fixture_path
    from wbretarget.simulate import load_scenario, run_scenario

    out = {}
    for entry in sorted(fixture_path("scenarios").iterdir(), key=lambda p: p.name):
        scenario = load_scenario(str(entry))
        out[entry.name] = (scenario, run_scenario(scenario))
    return out
