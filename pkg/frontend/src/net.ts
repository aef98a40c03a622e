// Reconnecting state-stream client.  The state stream is the single source
// of truth: commands are fire-and-forget and validated before sending.

import { CommandMessage, parseErrorMessage, parseStateMessage, StateMessage,
         validateCommand } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface SessionHandlers {
  onState(msg: StateMessage): void;
  onStatus(status: ConnectionStatus): void;
  onServerError?(reason: string): void;
}

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  readyState: number;
}

export type SocketFactory = (url: string) => SocketLike;

const BACKOFF_MS = [500, 1000, 2000, 4000];
const SOCKET_OPEN = 1;

export function backoffDelayMs(attempt: number): number {
  return BACKOFF_MS[Math.min(attempt, BACKOFF_MS.length - 1)];
}

export class Session {
  private socket: SocketLike | null = null;
  private attempt = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly handlers: SessionHandlers,
    private readonly factory: SocketFactory =
      (u) => new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect(): void {
    if (this.closed) return;
    this.handlers.onStatus("connecting");
    let socket: SocketLike;
    try {
      socket = this.factory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.attempt = 0;
      this.handlers.onStatus("connected");
    };
    socket.onclose = () => this.dropped();
    socket.onerror = () => {
      /* close always follows */
    };
    socket.onmessage = (ev) => {
      const raw = typeof ev.data === "string" ? ev.data : "";
      const state = parseStateMessage(raw);
      if (state) {
        this.handlers.onState(state);
        return;
      }
      const reason = parseErrorMessage(raw);
      if (reason && this.handlers.onServerError) {
        this.handlers.onServerError(reason);
      }
    };
  }

  /** Validated send; returns false when disconnected or invalid. */
  send(cmd: CommandMessage): boolean {
    try {
      validateCommand(cmd);
    } catch {
      return false;
    }
    if (!this.socket || this.socket.readyState !== SOCKET_OPEN) return false;
    try {
      this.socket.send(JSON.stringify(cmd));
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.socket?.close();
  }

  private dropped(): void {
    this.socket = null;
    if (this.closed) return;
    this.handlers.onStatus("disconnected");
    this.scheduleReconnect();
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    const delay = backoffDelayMs(this.attempt);
    this.attempt += 1;
    this.timer = setTimeout(() => this.connect(), delay);
  }
}
