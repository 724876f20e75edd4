"""Command-line entry points: validate, run, serve, bench."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from .contacts import ContactSpec, PLANE, POINT
from .retarget import RetargetConfig, build_qp, converge, initial_state, step
from .qpsolver import solve_qp
from .simulate import load_model, load_scenario, run_scenario, verify_trace


def _setup_logging() -> None:
    level = os.environ.get("WBRETARGET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _parse_contacts(plane_frames, point_frames):
    """Contact roster from CLI flags: plane entries may carry hx,hy extents."""
    out = []
    for item in plane_frames or ():
        frame, _, extents = item.partition(":")
        if extents:
            hx, hy = (float(v) for v in extents.split(","))
        else:
            hx = hy = 0.05
        out.append((ContactSpec(frame=frame, kind=PLANE, cop_half_extents=(hx, hy)), True))
    for frame in point_frames or ():
        out.append((ContactSpec(frame=frame, kind=POINT), True))
    return tuple(out)


def cmd_validate(args) -> int:
    try:
        model = load_model(args.model)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    base = "floating" if model.floating_base else "fixed"
    print(
        f"{args.model}: {model.n} joints, {model.nv} velocity dofs, {base} base, "
        f"{len(model.frame_names())} frames, {model.total_mass:.3f} kg"
    )
    return 0


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        trace = run_scenario(scenario)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with open(args.out, "w") as f:
        f.write(trace.to_jsonl())
    report = verify_trace(trace)
    if args.report:
        with open(args.report, "w") as f:
            json.dump(asdict(report), f, indent=2, sort_keys=True)
    print(
        f"{args.scenario}: {len(trace.records)} ticks, "
        f"min margin {report.min_margin:.3e}, max residual {report.max_residual:.3e}, "
        f"solve p50 {report.timing_us['p50']:.0f} us -> {'PASS' if report.ok else 'FAIL'}"
    )
    for index, message in report.failures[:10]:
        print(f"  tick {index}: {message}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .app import ServiceConfig, create_app

    try:
        model = load_model(args.model)
        config = ServiceConfig(rate=args.rate, contacts=_parse_contacts(args.plane, args.point))
        app = create_app(model, config)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_bench(args) -> int:
    try:
        model = load_model(args.model)
        contacts = _parse_contacts(args.plane, args.point)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    from .contacts import ContactEntry, ContactSet, ContactState, ENABLED

    roster = ContactSet([ContactEntry(spec, ContactState(phase=ENABLED)) for spec, _ in contacts])
    cfg = RetargetConfig()
    state = initial_state(model, roster)
    if roster.wrench_dim:
        state = converge(model, state, [], cfg, tol=1e-8, max_iters=300)
    for _ in range(10):  # warm up caches and the solver's warm start
        state = step(model, state, [], cfg)
    build_us, solve_us, step_us = [], [], []
    for _ in range(args.iters):
        t0 = time.perf_counter()
        problem = build_qp(model, state, [], cfg)
        t1 = time.perf_counter()
        solve_qp(problem)
        t2 = time.perf_counter()
        state = step(model, state, [], cfg)
        t3 = time.perf_counter()
        build_us.append((t1 - t0) * 1e6)
        solve_us.append((t2 - t1) * 1e6)
        step_us.append((t3 - t2) * 1e6)
    for name, times in (("build", build_us), ("solve", solve_us), ("step", step_us)):
        p50, p90, p99 = np.percentile(times, (50, 90, 99))
        print(f"{name:6s} p50 {p50:8.1f} us   p90 {p90:8.1f} us   p99 {p99:8.1f} us")
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="wbretarget",
        description="Real-time multi-contact whole-body retargeting tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and check a robot description")
    p.add_argument("model", help="fixture name or path to a robot description file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a scenario and verify its trace")
    p.add_argument("scenario", help="path to a scenario JSON file")
    p.add_argument("--out", default="trace.jsonl", help="trace output path")
    p.add_argument("--report", default=None, help="write the verification report as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run the WebSocket teleoperation service")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8710)
    p.add_argument("--rate", type=float, default=200.0, help="loop rate in Hz")
    p.add_argument("--plane", action="append", metavar="FRAME[:HX,HY]",
                   help="plane contact, repeatable")
    p.add_argument("--point", action="append", metavar="FRAME", help="point contact, repeatable")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="time QP build/solve on a model")
    p.add_argument("--model", required=True)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--plane", action="append", metavar="FRAME[:HX,HY]")
    p.add_argument("--point", action="append", metavar="FRAME")
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
