"""Acceptance suite: one test per shipped guarantee, at pinned tolerances.

Each test prints a single PASS line with the measured value so the run
log doubles as an acceptance report.
"""

import json
import time

import numpy as np
import pytest
from conftest import central_difference, random_configuration, rel_err
from test_model import fd_frame_jacobian
from test_qpsolver import enumerate_active_sets, kkt_check, random_problem

from wbretarget.contacts import (
    ContactEntry,
    ContactSet,
    ContactSpec,
    ContactState,
    ENABLED,
    POINT,
    RAMPING_OUT,
)
from wbretarget.geometry import Pose
from wbretarget.model import Configuration, Kinematics
from wbretarget.qpsolver import OPTIMAL, solve_qp
from wbretarget.retarget import (
    EffectorCommand,
    RetargetConfig,
    build_qp,
    converge,
    initial_state,
    step,
)
from wbretarget.simulate import oracle_solve

FIXTURES = ["pendulum.urdf", "twolink.urdf", "box.urdf", "dualarm.urdf", "biped.urdf"]

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


def enabled(spec):
    return ContactEntry(spec, ContactState(phase=ENABLED))


def test_criterion_01_derivatives_match_finite_differences(models):
    from wbretarget.statics import statics_derivatives, statics_evaluate

    start = time.perf_counter()
    worst = 0.0
    for name in FIXTURES:
        m = models[name]
        contacts = ContactSet([enabled(s) for s in CONTACT_SETS[name]])
        frames = m.frame_names()
        rng = np.random.default_rng(101)
        for _ in range(100):
            cfg = random_configuration(m, rng)
            lam = rng.uniform(-80, 80, contacts.wrench_dim)
            d = statics_derivatives(m, contacts, cfg, lam)
            dq = np.vstack([d.dr_dq, d.dtau_dq])

            def full(c):
                r = statics_evaluate(m, contacts, c, lam)
                return np.concatenate([r.base_residual, r.joint_torques])

            err = rel_err(dq, central_difference(m, cfg, full))
            assert err <= 1e-4
            frame = frames[rng.integers(len(frames))]
            kin = Kinematics(m, cfg)
            jerr = rel_err(kin.frame_jacobian(frame), fd_frame_jacobian(m, cfg, frame))
            assert jerr <= 1e-4
            worst = max(worst, err, jerr)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(
        f"criterion 1 PASS: derivatives vs central differences, 100 cfgs x "
        f"{len(FIXTURES)} fixtures, worst rel err {worst:.2e} <= 1e-4, {elapsed:.1f}s < 30s"
    )


def test_criterion_02_equilibrium_convergence(models):
    results = []
    for name, entries in (
        ("box.urdf", [enabled(ContactSpec(frame="foot", cop_half_extents=(0.15, 0.15)))]),
        (
            "biped.urdf",
            [enabled(ContactSpec(frame=f, cop_half_extents=(0.07, 0.04))) for f in ("l_foot", "r_foot")],
        ),
    ):
        m = models[name]
        state = converge(m, initial_state(m, ContactSet(entries)), [], RetargetConfig(), max_iters=300)
        bound = 1e-6 * (1.0 + m.total_mass * 9.81)
        residual = float(np.linalg.norm(state.base_residual))
        assert residual <= bound
        results.append(f"{name} |r|={residual:.2e}<={bound:.2e}")
    print(f"criterion 2 PASS: equilibrium within 300 iterations ({'; '.join(results)})")


def test_criterion_03_oracle_equivalence(models):
    checked = 0
    worst_q = worst_w = 0.0
    # reachable full-pose targets on the non-redundant models: the fixed
    # point is unique, so both routes must land on the same joints
    for name, frame, q_star in (
        ("pendulum.urdf", "tip", [0.7]),
        ("pendulum.urdf", "tip", [-1.2]),
        ("twolink.urdf", "hand", [0.5, -0.8]),
        ("twolink.urdf", "hand", [-0.3, 1.1]),
    ):
        m = models[name]
        q_star = np.asarray(q_star, float)
        target = Kinematics(m, Configuration(joint_positions=q_star)).pose_of(frame)
        commands = [EffectorCommand(frame, target)]
        cfg0 = Configuration(joint_positions=np.zeros(m.n))
        contacts = ContactSet([])
        state = converge(
            m, initial_state(m, contacts, cfg0), commands, RetargetConfig(), max_iters=2000
        )
        oracle = oracle_solve(m, contacts, commands, cfg0)
        assert oracle.converged
        dq = float(np.max(np.abs(state.cfg.joint_positions - oracle.cfg.joint_positions)))
        assert dq <= 1e-4
        worst_q = max(worst_q, dq)
        checked += 1
    # standing box: the wrench route must agree too
    m = models["box.urdf"]
    contacts = ContactSet([enabled(ContactSpec(frame="foot", cop_half_extents=(0.15, 0.15)))])
    state = converge(m, initial_state(m, contacts), [], RetargetConfig())
    oracle = oracle_solve(m, contacts, [], Configuration(joint_positions=np.zeros(0)))
    assert oracle.converged
    dw = float(np.max(np.abs(state.lam - oracle.lam)))
    assert dw <= 1e-3 * m.total_mass * 9.81
    checked += 1
    assert checked >= 5
    print(
        f"criterion 3 PASS: {checked} oracle scenarios, worst joint gap {worst_q:.2e} rad "
        f"<= 1e-4, worst wrench gap {dw:.2e} N <= {1e-3 * m.total_mass * 9.81:.2e}"
    )


def test_criterion_04_shipped_traces_feasible(shipped_traces):
    worst_margin = np.inf
    worst_torque = 0.0
    for name, (_, trace) in shipped_traces.items():
        lower = np.asarray(trace.meta["joint_lower"])
        upper = np.asarray(trace.meta["joint_upper"])
        effort = np.asarray(trace.meta["effort_max"])
        for r in trace.records:
            for _, _, v in r["margins"]:
                assert v >= -1e-6, (name, r["t"], v)
                worst_margin = min(worst_margin, v)
            q = np.asarray(r["joints"])
            assert np.all(q >= lower) and np.all(q <= upper), (name, r["t"])
            if len(q):
                ratio = float(np.max(np.abs(np.asarray(r["tau"])) / effort))
                assert ratio <= 0.9, (name, r["t"], ratio)
                worst_torque = max(worst_torque, ratio)
    print(
        f"criterion 4 PASS: {len(shipped_traces)} shipped traces feasible, min margin "
        f"{worst_margin:.2e} >= -1e-6, max torque ratio {worst_torque:.3f} <= 0.9"
    )


def test_criterion_05_removal_ramp_smooth(shipped_traces):
    _, trace = shipped_traces["switch_removal_biped.json"]
    fz_series = []
    worst_other = np.inf
    for r in trace.records:
        phases = {c[0]: c[1] for c in r["contacts"]}
        if phases.get("r_foot") == RAMPING_OUT:
            fz_series.append(next(c[2] for c in r["contacts"] if c[0] == "r_foot"))
            for frame, _, v in r["margins"]:
                if frame != "r_foot":
                    worst_other = min(worst_other, v)
    assert fz_series, "removal ramp never observed"
    increases = np.diff(fz_series)
    max_inc = float(np.max(increases, initial=-np.inf))
    assert max_inc <= 1e-3
    assert fz_series[-1] <= 1.0
    assert worst_other >= -1e-9  # no other margin goes below zero
    print(
        f"criterion 5 PASS: removal ramp over {len(fz_series)} ticks, max f_z increase "
        f"{max_inc:.2e} <= 1e-3 N, f_z at disable {fz_series[-1]:.2e} <= 1 N, "
        f"other margins >= {worst_other:.2e}"
    )


def test_criterion_06_velocity_saturation(shipped_traces):
    _, trace = shipped_traces["reach_dualarm.json"]
    dt = 1.0 / trace.meta["rate"]
    pos = np.array(
        [r["effectors"]["r_hand_frame"][:3] for r in trace.records if "r_hand_frame" in r["effectors"]]
    )
    speeds = np.linalg.norm(np.diff(pos, axis=0), axis=1) / dt
    moving = np.flatnonzero(speeds > 0.03)
    lo, hi = moving[len(moving) // 4], moving[(3 * len(moving)) // 4]
    mid = speeds[lo:hi]
    assert np.all(mid >= 0.30 * 0.95) and np.all(mid <= 0.30 * 1.05)
    print(
        f"criterion 6 PASS: 1 m reach saturates at {np.mean(mid):.4f} m/s "
        f"(range {np.min(mid):.4f}-{np.max(mid):.4f}) within 0.30 +/- 5% over the middle 50%"
    )


def test_criterion_07_timing(models):
    m = models["biped.urdf"]
    contacts = ContactSet(
        [enabled(ContactSpec(frame=f, cop_half_extents=(0.07, 0.04))) for f in ("l_foot", "r_foot")]
        + [enabled(ContactSpec(frame=f, kind=POINT)) for f in ("l_hand", "r_hand")]
    )
    cfg = RetargetConfig()
    state = converge(m, initial_state(m, contacts), [], cfg, max_iters=300)
    for _ in range(10):  # warm caches and the solver's warm start
        state = step(m, state, [], cfg)
    samples = []
    for _ in range(200):
        t0 = time.perf_counter()
        problem = build_qp(m, state, [], cfg)
        sol = solve_qp(problem)
        samples.append((time.perf_counter() - t0) * 1e3)
        assert sol.status == OPTIMAL
        state = step(m, state, [], cfg)
    median = float(np.median(samples))
    assert median <= 5.0  # CI hard bound; desktop target is 1 ms
    print(
        f"criterion 7 PASS: biped 2 plane + 2 point contacts, median build+solve "
        f"{median:.2f} ms <= 5 ms CI bound (desktop target 1 ms)"
    )


def test_criterion_08_qp_matches_enumeration():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 5))
        e = int(rng.integers(0, min(3, d)))  # keep equalities strictly under d
        ni = int(rng.integers(0, 7))
        p = random_problem(rng, d, e, ni)
        sol = solve_qp(p)
        brute = enumerate_active_sets(p)
        if brute is None:
            assert sol.status != OPTIMAL
            continue
        assert sol.status == OPTIMAL
        f = 0.5 * sol.x @ p.H @ sol.x + p.g @ sol.x
        gap = abs(f - brute[0]) / (1.0 + abs(brute[0]))
        assert gap <= 1e-8
        worst = max(worst, gap)
    for _ in range(200):  # KKT contract on larger instances
        d = int(rng.integers(5, 31))
        p = random_problem(rng, d, int(rng.integers(0, d // 2)), int(rng.integers(0, 2 * d)))
        sol = solve_qp(p)
        if sol.status == OPTIMAL:
            kkt_check(p, sol)
    print(
        f"criterion 8 PASS: 1000 instances match enumeration, worst objective gap "
        f"{worst:.2e} <= 1e-8; KKT contract holds to d=30"
    )


def test_criterion_09_boundary_clamping(shipped_traces):
    _, trace = shipped_traces["reach_far_biped.json"]
    for r in trace.records:
        for _, _, v in r["margins"]:
            assert v >= -1e-6
    steady = trace.records[-1]
    active = min(v for _, _, v in steady["margins"])
    assert active <= 1e-3  # the feasibility boundary is actually reached
    displacement = float(np.linalg.norm(np.asarray(steady["base_pose"][:3])))
    assert displacement < 2.0  # bounded, nowhere near the 10 m command
    print(
        f"criterion 9 PASS: 10 m target held for 10 s, margins >= -1e-6, tightest "
        f"steady-state margin {active:.2e} <= 1e-3 (active), base moved {displacement:.2f} m"
    )


def test_criterion_10_determinism(models, shipped_traces):
    from wbretarget.app import ServiceConfig, TeleopCore
    from wbretarget.simulate import run_scenario

    scenario, trace = shipped_traces["push_box.json"]
    rerun = run_scenario(scenario)
    assert rerun.canonical_bytes() == trace.canonical_bytes()

    # replaying a recorded message log reproduces the service states too
    log = [
        (0, {"v": 1, "type": "set_target", "frame": "handle", "pose": [0.22, 0.0, 0.31, 1, 0, 0, 0]}),
        (15, {"v": 1, "type": "external_wrench", "frame": "handle", "wrench": [10, 0, 0, 0, 0, 0]}),
    ]

    def replay():
        cfg = ServiceConfig(
            contacts=((ContactSpec(frame="foot", cop_half_extents=(0.15, 0.15)), True),)
        )
        core = TeleopCore(models["box.urdf"], cfg)
        out = []
        for i in range(40):
            for at, m in log:
                if at == i:
                    core.handle_message(m)
            state, _ = core.tick()
            state.pop("solve_us")
            out.append(state)
        return json.dumps(out, sort_keys=True)

    assert replay() == replay()
    print(
        "criterion 10 PASS: scenario re-run bit-for-bit identical (canonical bytes); "
        "message-log replay reproduces the state stream exactly"
    )
