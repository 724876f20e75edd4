import { describe, expect, it } from "vitest";

import type { StateMessage } from "../src/protocol.js";
import {
  connectionBanner,
  dashboardRows,
  forceArrows,
  marginGroup,
  skeletonSegments,
  sparklinePoints,
  wireNumber,
} from "../src/render.js";
import { ViewModel } from "../src/viewmodel.js";

function state(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    v: 1,
    type: "state",
    t: 0.005,
    base_pose: [0.1, 0.2, 0.9, 1, 0, 0, 0],
    joint_positions: [],
    effectors: { r_hand: [0.4, -0.2, 1.1, 1, 0, 0, 0] },
    contacts: [
      { frame: "l_foot", phase: "enabled", wrench: [0, 0, 200, 0, 0, 0] },
      { frame: "r_foot", phase: "ramping_out", wrench: [0, 0, 50, 0, 0, 0] },
    ],
    margins: [
      ["l_foot", "cop_x", 3.25],
      ["l_foot", "unilateral", 200],
      ["r_foot", "friction_x", -1],
    ],
    residual: 0,
    solve_us: 800,
    ...overrides,
  };
}

describe("margin dashboard", () => {
  it("renders values byte-equal to the wire", () => {
    const vm = new ViewModel();
    const wire = [-1, 0.30000000000000004, 1e-9, 98.10000000000001];
    vm.applyServer(
      state({
        margins: wire.map((v, i) => ["foot", "unilateral", v]) as never,
      }),
    );
    const rows = dashboardRows(vm);
    rows.forEach((row, i) => {
      expect(row.text).toBe(wireNumber(wire[i]));
      expect(row.value).toBe(wire[i]);
    });
  });

  it("groups rows by constraint class and flags violations red", () => {
    const vm = new ViewModel();
    vm.applyServer(state());
    const rows = dashboardRows(vm);
    expect(rows.map((r) => r.group)).toEqual(["unilateral", "pyramid", "cop"]);
    const violated = rows.find((r) => r.name === "friction_x");
    expect(violated?.critical).toBe(true);
    expect(violated?.text).toBe("-1");
    expect(rows.filter((r) => r.value >= 0).every((r) => !r.critical)).toBe(true);
  });

  it("classifies every wire margin name", () => {
    expect(marginGroup("unilateral")).toBe("unilateral");
    expect(marginGroup("friction_y")).toBe("pyramid");
    expect(marginGroup("cop_y")).toBe("cop");
    expect(marginGroup("torsion")).toBe("torsion");
    expect(marginGroup("force_cap")).toBe("force_cap");
    expect(marginGroup("???")).toBe("other");
  });

  it("is empty before the first state arrives", () => {
    expect(dashboardRows(new ViewModel())).toEqual([]);
  });
});

describe("connection banner", () => {
  it("hides when open, counts down when closed", () => {
    const vm = new ViewModel();
    expect(connectionBanner(vm)).toBe("connecting…");
    vm.setConnection("open");
    expect(connectionBanner(vm)).toBeNull();
    vm.setConnection("closed", 3);
    expect(connectionBanner(vm)).toContain("reconnecting in 3s");
  });
});

describe("skeleton view", () => {
  it("projects base and effectors per panel", () => {
    const vm = new ViewModel();
    vm.applyServer(state());
    const front = skeletonSegments(vm, "front");
    expect(front).toHaveLength(1);
    expect(front[0].from).toEqual([0.1, 0.9]); // x, z
    expect(front[0].to).toEqual([0.4, 1.1]);
    const side = skeletonSegments(vm, "side");
    expect(side[0].from).toEqual([0.2, 0.9]); // y, z
    expect(side[0].to).toEqual([-0.2, 1.1]);
  });

  it("shows optimistic targets as ghosts", () => {
    const vm = new ViewModel();
    vm.setConnection("open");
    vm.applyServer(state());
    vm.markPending("r_hand", [0.8, -0.2, 1.2, 1, 0, 0, 0], 0);
    const segments = skeletonSegments(vm, "front");
    const ghost = segments.find((s) => s.ghost);
    expect(ghost?.to).toEqual([0.8, 1.2]);
    expect(segments.filter((s) => !s.ghost)).toHaveLength(1);
  });

  it("degrades to nothing without pose data", () => {
    expect(skeletonSegments(new ViewModel(), "front")).toEqual([]);
  });
});

describe("force arrows and sparkline", () => {
  it("scales arrows by normal force", () => {
    const arrows = forceArrows(state());
    expect(arrows).toHaveLength(2);
    expect(arrows[0].length).toBe(1);
    expect(arrows[1].length).toBeCloseTo(0.25, 12);
    expect(arrows[1].phase).toBe("ramping_out");
    expect(forceArrows(null)).toEqual([]);
  });

  it("maps samples onto the canvas box", () => {
    const samples = [
      { t: 0, value: 500 },
      { t: 1, value: 1000 },
      { t: 2, value: 750 },
    ];
    const pts = sparklinePoints(samples, 100, 40);
    expect(pts[0]).toEqual([0, 40]);
    expect(pts[1]).toEqual([50, 0]);
    expect(pts[2]).toEqual([100, 20]);
    expect(sparklinePoints([], 100, 40)).toEqual([]);
  });
});
