/**
 * Pure view-structure builders: every function maps the view model to
 * plain data the DOM/canvas layer draws.  Keeping them pure makes the
 * whole presentation testable without a browser.
 *
 * Margin values are rendered through `wireNumber` only, so what the
 * operator reads is exactly what the wire carried.
 */

import type { StateMessage } from "./protocol.js";
import type { Sample } from "./ringbuffer.js";
import type { ViewModel } from "./viewmodel.js";

/** Canonical display form of a wire number: the value itself, unrounded. */
export function wireNumber(value: number): string {
  return String(value);
}

export type MarginGroup =
  | "unilateral"
  | "pyramid"
  | "cop"
  | "torsion"
  | "force_cap"
  | "other";

const GROUP_BY_NAME: Record<string, MarginGroup> = {
  unilateral: "unilateral",
  friction_x: "pyramid",
  friction_y: "pyramid",
  cop_x: "cop",
  cop_y: "cop",
  torsion: "torsion",
  force_cap: "force_cap",
};

export function marginGroup(name: string): MarginGroup {
  return GROUP_BY_NAME[name] ?? "other";
}

export interface MarginRow {
  frame: string;
  name: string;
  group: MarginGroup;
  value: number;
  /** Byte-exact display text of the wire value. */
  text: string;
  /** True when the constraint is violated (bar drawn red). */
  critical: boolean;
}

const GROUP_ORDER: MarginGroup[] = [
  "unilateral",
  "pyramid",
  "cop",
  "torsion",
  "force_cap",
  "other",
];

/** Dashboard rows grouped by constraint class, in wire order inside groups. */
export function dashboardRows(vm: ViewModel): MarginRow[] {
  if (vm.state === null) return [];
  const rows: MarginRow[] = vm.state.margins.map(([frame, name, value]) => ({
    frame,
    name,
    group: marginGroup(name),
    value,
    text: wireNumber(value),
    critical: value < 0,
  }));
  return rows.sort((a, b) => GROUP_ORDER.indexOf(a.group) - GROUP_ORDER.indexOf(b.group));
}

export function connectionBanner(vm: ViewModel): string | null {
  if (vm.status === "open") return null;
  if (vm.status === "connecting") return "connecting…";
  const countdown =
    vm.reconnectInSeconds === null ? "" : ` — reconnecting in ${vm.reconnectInSeconds}s`;
  return `disconnected${countdown}`;
}

/** Polyline for a sparkline; x spans [0,width], y is flipped for canvas. */
export function sparklinePoints(
  samples: readonly Sample[],
  width: number,
  height: number,
): Array<[number, number]> {
  if (samples.length === 0) return [];
  const t0 = samples[0].t;
  const t1 = samples[samples.length - 1].t;
  const span = Math.max(t1 - t0, 1e-9);
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of samples) {
    lo = Math.min(lo, s.value);
    hi = Math.max(hi, s.value);
  }
  const range = Math.max(hi - lo, 1e-9);
  return samples.map((s) => [
    ((s.t - t0) / span) * width,
    height - ((s.value - lo) / range) * height,
  ]);
}

export type Panel = "front" | "side";

export interface Segment {
  from: [number, number];
  to: [number, number];
  label: string;
  /** Ghost segments show optimistic (unconfirmed) targets. */
  ghost: boolean;
}

function project(panel: Panel, p: readonly number[]): [number, number] {
  // front: x right, z up; side: y right, z up
  return panel === "front" ? [p[0], p[2]] : [p[1], p[2]];
}

/**
 * Dual-orthographic 2.5D skeleton: the floating base joined to every
 * effector pose on the wire, plus ghost segments to optimistic targets.
 * Returns [] when pose data is absent so the caller can fall back to the
 * dashboard alone.
 */
export function skeletonSegments(vm: ViewModel, panel: Panel): Segment[] {
  const state = vm.state;
  if (state === null || !Array.isArray(state.base_pose) || state.base_pose.length < 3) return [];
  const base = project(panel, state.base_pose);
  const segments: Segment[] = [];
  for (const [frame, pose] of Object.entries(state.effectors)) {
    segments.push({ from: base, to: project(panel, pose), label: frame, ghost: false });
  }
  for (const [frame, target] of vm.pending) {
    segments.push({ from: base, to: project(panel, target.pose), label: `${frame} (ghost)`, ghost: true });
  }
  return segments;
}

export interface ForceArrow {
  frame: string;
  phase: string;
  fz: number;
  /** Arrow length in [0,1], scaled to the largest normal force on screen. */
  length: number;
}

export function forceArrows(state: StateMessage | null): ForceArrow[] {
  if (state === null) return [];
  const fzMax = Math.max(1e-9, ...state.contacts.map((c) => Math.abs(c.wrench[2] ?? 0)));
  return state.contacts.map((c) => ({
    frame: c.frame,
    phase: c.phase,
    fz: c.wrench[2] ?? 0,
    length: Math.abs(c.wrench[2] ?? 0) / fzMax,
  }));
}
