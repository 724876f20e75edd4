import { describe, expect, it } from "vitest";

import { TeleopClient } from "../src/client.js";
import type { SocketLike } from "../src/client.js";
import { setTarget } from "../src/protocol.js";
import { ViewModel } from "../src/viewmodel.js";

/** In-memory socket with a scriptable server side. */
class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }

  serverSends(msg: unknown): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }
}

function harness(options: { reconnectDelaySeconds?: number } = {}) {
  const sockets: FakeSocket[] = [];
  const timers: Array<() => void> = [];
  const vm = new ViewModel();
  const client = new TeleopClient("ws://test/ws", vm, {
    subscribeRateHz: 30,
    reconnectDelaySeconds: options.reconnectDelaySeconds ?? 3,
    socketFactory: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    setInterval: (fn) => timers.push(fn) - 1,
    clearInterval: () => undefined,
  });
  return { vm, client, sockets, timers };
}

function stateFrame(t: number, effectors: Record<string, number[]> = {}) {
  return {
    v: 1,
    type: "state",
    t,
    base_pose: [0, 0, 0, 1, 0, 0, 0],
    joint_positions: [],
    effectors,
    contacts: [],
    margins: [],
    residual: 0,
    solve_us: 500,
  };
}

describe("TeleopClient", () => {
  it("subscribes on open and feeds states into the view model", () => {
    const { vm, client, sockets } = harness();
    client.connect();
    expect(vm.status).toBe("connecting");
    sockets[0].onopen?.();
    expect(vm.status).toBe("open");
    expect(JSON.parse(sockets[0].sent[0])).toEqual({ v: 1, type: "subscribe", rate: 30 });
    sockets[0].serverSends(stateFrame(0.005));
    expect(vm.state?.t).toBe(0.005);
  });

  it("refuses to send while disconnected and disables optimism", () => {
    const { client } = harness();
    expect(client.send(setTarget("hand", [0, 0, 0, 1, 0, 0, 0]))).toBe(false);
    client.connect();
    expect(client.send(setTarget("hand", [0, 0, 0, 1, 0, 0, 0]))).toBe(false); // not open yet
  });

  it("ignores garbage frames", () => {
    const { vm, client, sockets } = harness();
    client.connect();
    sockets[0].onopen?.();
    sockets[0].onmessage?.({ data: "garbage" });
    sockets[0].onmessage?.({ data: JSON.stringify({ v: 7, type: "state" }) });
    expect(vm.state).toBeNull();
  });

  it("counts down and reconnects after a drop", () => {
    const { vm, client, sockets, timers } = harness({ reconnectDelaySeconds: 2 });
    client.connect();
    sockets[0].onopen?.();
    sockets[0].onclose?.();
    expect(vm.status).toBe("closed");
    expect(vm.reconnectInSeconds).toBe(2);
    timers[0]();
    expect(vm.reconnectInSeconds).toBe(1);
    timers[0]();
    expect(vm.status).toBe("connecting");
    expect(sockets).toHaveLength(2);
    sockets[1].onopen?.();
    expect(vm.status).toBe("open");
  });

  it("drag-to-echo round trip stays under the latency budget", () => {
    const { vm, client, sockets } = harness();
    client.connect();
    sockets[0].onopen?.();
    const pose: [number, number, number, number, number, number, number] = [
      0.05, 0, 0.3, 1, 0, 0, 0,
    ];
    const sentAt = performance.now();
    expect(client.send(setTarget("hand", pose))).toBe(true);
    vm.markPending("hand", pose, sentAt);
    expect(JSON.parse(sockets[0].sent[1])).toEqual({
      v: 1,
      type: "set_target",
      frame: "hand",
      pose,
    });
    // loopback echo: the service reaches the target and broadcasts it
    sockets[0].serverSends(stateFrame(0.01, { hand: pose }));
    const latencyMs = performance.now() - sentAt;
    expect(vm.pending.has("hand")).toBe(false); // ghost confirmed
    expect(vm.state?.effectors.hand).toEqual(pose);
    expect(latencyMs).toBeLessThan(100);
  });
});
