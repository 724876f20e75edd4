/**
 * Wire protocol shared with the retargeting service: text WebSocket
 * frames, one JSON document each, `v: 1` plus a `type` discriminator.
 * The builders here are the only way the console creates outbound
 * messages, so every command is schema-exact by construction.
 */

export const PROTOCOL_VERSION = 1 as const;

export type Pose7 = [number, number, number, number, number, number, number];
export type Wrench6 = [number, number, number, number, number, number];

export interface SetTargetMessage {
  v: typeof PROTOCOL_VERSION;
  type: "set_target";
  frame: string;
  pose: Pose7;
}

export interface SwitchContactMessage {
  v: typeof PROTOCOL_VERSION;
  type: "switch_contact";
  frame: string;
  action: "add" | "remove";
}

export interface ExternalWrenchMessage {
  v: typeof PROTOCOL_VERSION;
  type: "external_wrench";
  frame: string;
  wrench: Wrench6;
}

export interface SetParamMessage {
  v: typeof PROTOCOL_VERSION;
  type: "set_param";
  path: string;
  value: number;
}

export interface SubscribeMessage {
  v: typeof PROTOCOL_VERSION;
  type: "subscribe";
  rate: number;
}

export type ClientMessage =
  | SetTargetMessage
  | SwitchContactMessage
  | ExternalWrenchMessage
  | SetParamMessage
  | SubscribeMessage;

export interface ContactSnapshot {
  frame: string;
  phase: string;
  wrench: number[];
}

/** [contact frame, margin name, signed value]; positive = satisfied. */
export type MarginEntry = [string, string, number];

export interface StateMessage {
  v: typeof PROTOCOL_VERSION;
  type: "state";
  t: number;
  base_pose: number[];
  joint_positions: number[];
  effectors: Record<string, number[]>;
  contacts: ContactSnapshot[];
  margins: MarginEntry[];
  residual: number;
  solve_us: number;
}

export interface EventMessage {
  v: typeof PROTOCOL_VERSION;
  type: "event";
  event: string;
  [detail: string]: unknown;
}

export interface ErrorMessage {
  v: typeof PROTOCOL_VERSION;
  type: "error";
  code: string;
  detail: string;
}

export type ServerMessage = StateMessage | EventMessage | ErrorMessage;

function finiteVector(values: readonly number[], n: number): void {
  if (values.length !== n || values.some((x) => !Number.isFinite(x))) {
    throw new Error(`expected ${n} finite numbers`);
  }
}

export function setTarget(frame: string, pose: Pose7): SetTargetMessage {
  finiteVector(pose, 7);
  return { v: PROTOCOL_VERSION, type: "set_target", frame, pose: [...pose] as Pose7 };
}

export function switchContact(frame: string, action: "add" | "remove"): SwitchContactMessage {
  return { v: PROTOCOL_VERSION, type: "switch_contact", frame, action };
}

export function externalWrench(frame: string, wrench: Wrench6): ExternalWrenchMessage {
  finiteVector(wrench, 6);
  return { v: PROTOCOL_VERSION, type: "external_wrench", frame, wrench: [...wrench] as Wrench6 };
}

export function setParam(path: string, value: number): SetParamMessage {
  if (!Number.isFinite(value)) throw new Error("value must be finite");
  return { v: PROTOCOL_VERSION, type: "set_param", path, value };
}

export function subscribe(rate: number): SubscribeMessage {
  if (!(rate > 0)) throw new Error("rate must be > 0");
  return { v: PROTOCOL_VERSION, type: "subscribe", rate };
}

const SERVER_TYPES = new Set(["state", "event", "error"]);

/** Parse one inbound frame; null when it is not a valid server message. */
export function parseServerMessage(text: string): ServerMessage | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null) return null;
  const msg = raw as Record<string, unknown>;
  if (msg.v !== PROTOCOL_VERSION) return null;
  if (typeof msg.type !== "string" || !SERVER_TYPES.has(msg.type)) return null;
  if (msg.type === "state" && (typeof msg.t !== "number" || !Array.isArray(msg.margins))) {
    return null;
  }
  return msg as unknown as ServerMessage;
}
