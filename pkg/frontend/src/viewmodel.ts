/**
 * Single source of truth for everything the console displays.  WebSocket
 * callbacks mutate only this object; rendering reads it.  Every displayed
 * quantity originates from the wire — the view model never computes
 * physics, it only stores and windows what the service sent.
 */

import type { ErrorMessage, EventMessage, Pose7, ServerMessage, StateMessage } from "./protocol.js";
import { TimeSeriesBuffer } from "./ringbuffer.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface PendingTarget {
  pose: Pose7;
  sentAtMs: number;
}

export const HISTORY_WINDOW_SECONDS = 30;
const EVENT_LOG_LIMIT = 50;
/** An optimistic target counts as echoed once the effector is this close. */
const CONFIRM_POSITION_TOLERANCE = 1e-3;

export function marginKey(frame: string, name: string): string {
  return `${frame}/${name}`;
}

export class ViewModel {
  state: StateMessage | null = null;
  status: ConnectionStatus = "connecting";
  reconnectInSeconds: number | null = null;
  /** Commanded-but-not-yet-echoed targets, shown as ghosts. */
  readonly pending = new Map<string, PendingTarget>();
  readonly marginHistory = new Map<string, TimeSeriesBuffer>();
  readonly solveTimes = new TimeSeriesBuffer(HISTORY_WINDOW_SECONDS);
  readonly events: EventMessage[] = [];
  lastError: ErrorMessage | null = null;

  applyServer(msg: ServerMessage): void {
    if (msg.type === "state") {
      this.applyState(msg);
    } else if (msg.type === "event") {
      this.events.push(msg);
      if (this.events.length > EVENT_LOG_LIMIT) this.events.shift();
    } else {
      this.lastError = msg;
    }
  }

  private applyState(state: StateMessage): void {
    this.state = state;
    for (const [frame, name, value] of state.margins) {
      const key = marginKey(frame, name);
      let buf = this.marginHistory.get(key);
      if (buf === undefined) {
        buf = new TimeSeriesBuffer(HISTORY_WINDOW_SECONDS);
        this.marginHistory.set(key, buf);
      }
      buf.push(state.t, value);
    }
    this.solveTimes.push(state.t, state.solve_us);
    for (const [frame, target] of this.pending) {
      const echoed = state.effectors[frame];
      if (echoed !== undefined && positionClose(echoed, target.pose)) {
        this.pending.delete(frame);
      }
    }
  }

  /** Record an optimistic target the moment the command is sent. */
  markPending(frame: string, pose: Pose7, nowMs: number): void {
    this.pending.set(frame, { pose: [...pose] as Pose7, sentAtMs: nowMs });
  }

  setConnection(status: ConnectionStatus, reconnectInSeconds: number | null = null): void {
    this.status = status;
    this.reconnectInSeconds = status === "closed" ? reconnectInSeconds : null;
    if (status !== "open") this.pending.clear();
  }
}

function positionClose(a: readonly number[], b: readonly number[]): boolean {
  let sq = 0;
  for (let i = 0; i < 3; i += 1) sq += (a[i] - b[i]) ** 2;
  return Math.sqrt(sq) <= CONFIRM_POSITION_TOLERANCE;
}
