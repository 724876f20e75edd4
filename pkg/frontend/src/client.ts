/**
 * WebSocket session: parses inbound frames into the view model and
 * serializes outbound commands.  Reconnects with a visible countdown.
 * The socket and timers are injectable so the whole lifecycle is
 * testable without a network.
 */

import { parseServerMessage, subscribe } from "./protocol.js";
import type { ClientMessage } from "./protocol.js";
import type { ViewModel } from "./viewmodel.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
}

export interface ClientOptions {
  subscribeRateHz?: number;
  reconnectDelaySeconds?: number;
  socketFactory?: (url: string) => SocketLike;
  setInterval?: (fn: () => void, ms: number) => number;
  clearInterval?: (id: number) => void;
}

export class TeleopClient {
  private socket: SocketLike | null = null;
  private countdownTimer: number | null = null;
  private readonly rate: number;
  private readonly reconnectDelay: number;
  private readonly makeSocket: (url: string) => SocketLike;
  private readonly startTimer: (fn: () => void, ms: number) => number;
  private readonly stopTimer: (id: number) => void;

  constructor(
    readonly url: string,
    readonly vm: ViewModel,
    options: ClientOptions = {},
  ) {
    this.rate = options.subscribeRateHz ?? 30;
    this.reconnectDelay = options.reconnectDelaySeconds ?? 3;
    this.makeSocket =
      options.socketFactory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.startTimer = options.setInterval ?? ((fn, ms) => setInterval(fn, ms) as unknown as number);
    this.stopTimer = options.clearInterval ?? ((id) => clearInterval(id));
  }

  connect(): void {
    this.vm.setConnection("connecting");
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.vm.setConnection("open");
      socket.send(JSON.stringify(subscribe(this.rate)));
    };
    socket.onmessage = (ev) => {
      const msg = parseServerMessage(ev.data);
      if (msg !== null) this.vm.applyServer(msg);
    };
    socket.onclose = () => {
      this.socket = null;
      this.scheduleReconnect();
    };
  }

  /** Serialize one command; false (and no send) while disconnected. */
  send(msg: ClientMessage): boolean {
    if (this.socket === null || this.vm.status !== "open") return false;
    this.socket.send(JSON.stringify(msg));
    return true;
  }

  get connected(): boolean {
    return this.vm.status === "open";
  }

  close(): void {
    if (this.countdownTimer !== null) {
      this.stopTimer(this.countdownTimer);
      this.countdownTimer = null;
    }
    this.socket?.close();
    this.socket = null;
    this.vm.setConnection("closed");
  }

  private scheduleReconnect(): void {
    let remaining = this.reconnectDelay;
    this.vm.setConnection("closed", remaining);
    if (this.countdownTimer !== null) this.stopTimer(this.countdownTimer);
    this.countdownTimer = this.startTimer(() => {
      remaining -= 1;
      if (remaining <= 0) {
        if (this.countdownTimer !== null) this.stopTimer(this.countdownTimer);
        this.countdownTimer = null;
        this.connect();
      } else {
        this.vm.setConnection("closed", remaining);
      }
    }, 1000);
  }
}
