/**
 * Console entry point: wires the WebSocket client, the drag/button
 * interactions, and a requestAnimationFrame render loop over the pure
 * builders in render.ts.  All state lives in the ViewModel.
 */

import { TeleopClient } from "./client.js";
import { externalWrench, setTarget, switchContact } from "./protocol.js";
import type { Pose7, StateMessage } from "./protocol.js";
import {
  connectionBanner,
  dashboardRows,
  forceArrows,
  skeletonSegments,
  sparklinePoints,
} from "./render.js";
import type { Panel } from "./render.js";
import { ViewModel } from "./viewmodel.js";

const WORLD_SCALE = 120; // pixels per metre
const PANELS: Panel[] = ["front", "side"];

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

function toScreen(canvas: HTMLCanvasElement, p: [number, number]): [number, number] {
  return [canvas.width / 2 + p[0] * WORLD_SCALE, canvas.height * 0.8 - p[1] * WORLD_SCALE];
}

function fromScreen(canvas: HTMLCanvasElement, x: number, y: number): [number, number] {
  return [(x - canvas.width / 2) / WORLD_SCALE, (canvas.height * 0.8 - y) / WORLD_SCALE];
}

function draggedPose(panel: Panel, original: readonly number[], world: [number, number]): Pose7 {
  const pose = [...original] as Pose7;
  if (panel === "front") {
    pose[0] = world[0];
  } else {
    pose[1] = world[0];
  }
  pose[2] = world[1];
  return pose;
}

function nearestEffector(
  state: StateMessage,
  panel: Panel,
  canvas: HTMLCanvasElement,
  x: number,
  y: number,
): string | null {
  let best: string | null = null;
  let bestDist = 20; // pixel pick radius
  for (const [frame, pose] of Object.entries(state.effectors)) {
    const p = panel === "front" ? [pose[0], pose[2]] : [pose[1], pose[2]];
    const [sx, sy] = toScreen(canvas, p as [number, number]);
    const d = Math.hypot(sx - x, sy - y);
    if (d < bestDist) {
      bestDist = d;
      best = frame;
    }
  }
  return best;
}

function drawPanel(vm: ViewModel, panel: Panel, canvas: HTMLCanvasElement): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#445";
  ctx.beginPath();
  ctx.moveTo(0, canvas.height * 0.8);
  ctx.lineTo(canvas.width, canvas.height * 0.8);
  ctx.stroke();
  for (const seg of skeletonSegments(vm, panel)) {
    ctx.strokeStyle = seg.ghost ? "#e9c46a" : "#8ecae6";
    ctx.setLineDash(seg.ghost ? [4, 4] : []);
    ctx.beginPath();
    const [ax, ay] = toScreen(canvas, seg.from);
    const [bx, by] = toScreen(canvas, seg.to);
    ctx.moveTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = seg.ghost ? "#e9c46a" : "#8ecae6";
    ctx.beginPath();
    ctx.arc(bx, by, 5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(seg.label, bx + 8, by - 4);
  }
  const arrows = forceArrows(vm.state);
  arrows.forEach((a, i) => {
    const x = 20 + i * 60;
    const y0 = canvas.height * 0.8;
    ctx.strokeStyle = a.phase === "enabled" ? "#90be6d" : "#f8961e";
    ctx.beginPath();
    ctx.moveTo(x, y0);
    ctx.lineTo(x, y0 - a.length * 60);
    ctx.stroke();
    ctx.fillStyle = "#ccc";
    ctx.fillText(`${a.frame} ${a.fz.toFixed(1)} N`, x - 10, y0 + 14);
  });
}

function drawSparkline(vm: ViewModel, canvas: HTMLCanvasElement): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const points = sparklinePoints(vm.solveTimes.values(), canvas.width, canvas.height);
  if (points.length < 2) return;
  ctx.strokeStyle = "#8ecae6";
  ctx.beginPath();
  ctx.moveTo(points[0][0], points[0][1]);
  for (const [x, y] of points.slice(1)) ctx.lineTo(x, y);
  ctx.stroke();
}

function renderDashboard(vm: ViewModel, table: HTMLElement): void {
  const rows = dashboardRows(vm);
  table.replaceChildren(
    ...rows.map((row) => {
      const tr = document.createElement("tr");
      tr.className = row.critical ? "margin critical" : "margin";
      for (const text of [row.frame, row.group, row.name, row.text]) {
        const td = document.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }
      return tr;
    }),
  );
}

export function start(url: string): TeleopClient {
  const vm = new ViewModel();
  const client = new TeleopClient(url, vm);
  const banner = byId<HTMLDivElement>("banner");
  const dashboard = byId<HTMLTableSectionElement>("margin-rows");
  const sparkline = byId<HTMLCanvasElement>("sparkline");
  const eventLog = byId<HTMLUListElement>("events");
  const canvases = PANELS.map((panel) => ({ panel, canvas: byId<HTMLCanvasElement>(`view-${panel}`) }));

  let drag: { panel: Panel; frame: string } | null = null;
  for (const { panel, canvas } of canvases) {
    canvas.addEventListener("pointerdown", (ev) => {
      if (vm.state === null) return;
      const frame = nearestEffector(vm.state, panel, canvas, ev.offsetX, ev.offsetY);
      if (frame !== null) drag = { panel, frame };
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (drag === null || drag.panel !== panel || vm.state === null) return;
      const original = vm.state.effectors[drag.frame];
      if (original === undefined) return;
      const pose = draggedPose(panel, original, fromScreen(canvas, ev.offsetX, ev.offsetY));
      if (client.send(setTarget(drag.frame, pose))) {
        vm.markPending(drag.frame, pose, performance.now());
      }
    });
    canvas.addEventListener("pointerup", () => {
      drag = null;
    });
  }

  byId<HTMLButtonElement>("switch-add").addEventListener("click", () => {
    const frame = byId<HTMLInputElement>("contact-frame").value;
    client.send(switchContact(frame, "add"));
  });
  byId<HTMLButtonElement>("switch-remove").addEventListener("click", () => {
    const frame = byId<HTMLInputElement>("contact-frame").value;
    client.send(switchContact(frame, "remove"));
  });
  byId<HTMLButtonElement>("push").addEventListener("click", () => {
    const frame = byId<HTMLInputElement>("wrench-frame").value;
    const fx = Number(byId<HTMLInputElement>("wrench-fx").value);
    client.send(externalWrench(frame, [fx, 0, 0, 0, 0, 0]));
  });

  const frame = () => {
    const text = connectionBanner(vm);
    banner.textContent = text ?? "";
    banner.style.display = text === null ? "none" : "block";
    for (const button of document.querySelectorAll<HTMLButtonElement>("button")) {
      button.disabled = !client.connected;
    }
    for (const { panel, canvas } of canvases) drawPanel(vm, panel, canvas);
    renderDashboard(vm, dashboard);
    drawSparkline(vm, sparkline);
    eventLog.replaceChildren(
      ...vm.events.slice(-8).map((ev) => {
        const li = document.createElement("li");
        li.textContent = `${ev.event}${"frame" in ev ? ` (${String(ev.frame)})` : ""}`;
        return li;
      }),
    );
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
  client.connect();
  return client;
}

declare global {
  interface Window {
    wbretargetConsole?: TeleopClient;
  }
}

if (typeof document !== "undefined" && document.getElementById("banner") !== null) {
  const url = new URLSearchParams(location.search).get("ws") ?? "ws://127.0.0.1:8710/ws";
  window.wbretargetConsole = start(url);
}
