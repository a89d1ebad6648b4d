/**
 * WebSocket client with automatic reconnection.
 *
 * The socket constructor is injectable so tests can drive connection
 * lifecycles with a fake. Backoff doubles from `baseDelayMs` up to
 * `maxDelayMs` and resets once a connection opens.
 */

import { STREAM_KINDS, type StreamEvent } from "./types.js";

export interface SocketLike {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface LiveSocketOptions {
  onEvent: (ev: StreamEvent) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
  factory?: SocketFactory;
  baseDelayMs?: number;
  maxDelayMs?: number;
}

const KINDS: ReadonlySet<string> = new Set(STREAM_KINDS);

function parseEvent(raw: unknown): StreamEvent | null {
  if (typeof raw !== "string") {
    return null;
  }
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) {
    return null;
  }
  const { type, data } = obj as { type?: unknown; data?: unknown };
  if (typeof type !== "string" || !KINDS.has(type)) {
    return null;
  }
  if (typeof data !== "object" || data === null) {
    return null;
  }
  return { type, data } as StreamEvent;
}

export class LiveSocket {
  /** Malformed frames seen; diagnostics only, never fatal. */
  dropped = 0;

  private readonly factory: SocketFactory;
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;
  private delayMs: number;
  private socket: SocketLike | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly url: string,
    private readonly opts: LiveSocketOptions,
  ) {
    this.factory = opts.factory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.baseDelayMs = opts.baseDelayMs ?? 500;
    this.maxDelayMs = opts.maxDelayMs ?? 10_000;
    this.delayMs = this.baseDelayMs;
  }

  connect(): void {
    if (this.stopped) {
      return;
    }
    this.opts.onStatus?.("connecting");
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.delayMs = this.baseDelayMs;
      this.opts.onStatus?.("open");
    };
    sock.onmessage = (ev) => {
      const parsed = parseEvent(ev.data);
      if (parsed === null) {
        this.dropped += 1;
        return;
      }
      this.opts.onEvent(parsed);
    };
    sock.onerror = () => {
      // The close handler owns recovery; errors alone carry no state.
    };
    sock.onclose = () => {
      if (this.socket !== sock) {
        return;
      }
      this.socket = null;
      if (this.stopped) {
        return;
      }
      this.opts.onStatus?.("closed");
      this.timer = setTimeout(() => {
        this.timer = null;
        this.connect();
      }, this.delayMs);
      this.delayMs = Math.min(this.delayMs * 2, this.maxDelayMs);
    };
  }

  /** Stop permanently; no further reconnect attempts fire. */
  close(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    const sock = this.socket;
    this.socket = null;
    sock?.close();
  }
}
