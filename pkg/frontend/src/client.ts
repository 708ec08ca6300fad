/**
 * Session against the simulation service over any line-oriented
 * transport (WebSocket bridge in the browser, raw TCP in Node tests).
 * Reconnects with exponential backoff; goal clicks are dropped with a
 * notice while disconnected.
 */

import { encodeGoal, encodeReset, parseServerMessage } from "./protocol.js";
import { SceneState } from "./scene.js";
import { canvasToWorld, type View } from "./transform.js";

export interface LineTransport {
  send(line: string): void;
  close(): void;
  onLine(cb: (line: string) => void): void;
  onClose(cb: () => void): void;
  onOpen(cb: () => void): void;
}

export type TransportFactory = () => LineTransport;

export interface SessionEvents {
  onChange?: () => void;
  onNotice?: (text: string) => void;
}

export class PlannerSession {
  readonly scene = new SceneState();
  private transport: LineTransport | null = null;
  private stopped = false;
  private backoffMs = 200;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly factory: TransportFactory,
    private readonly events: SessionEvents = {},
  ) {}

  connect(): void {
    if (this.stopped) return;
    const transport = this.factory();
    this.transport = transport;
    transport.onOpen(() => {
      this.scene.connected = true;
      this.backoffMs = 200;
      this.events.onChange?.();
    });
    transport.onLine((line) => {
      const msg = parseServerMessage(line);
      if (msg) {
        this.scene.ingest(msg);
        this.events.onChange?.();
      }
    });
    transport.onClose(() => {
      this.scene.connected = false;
      this.events.onChange?.();
      if (!this.stopped) {
        this.events.onNotice?.("disconnected, retrying");
        this.scheduleReconnect();
      }
    });
  }

  private scheduleReconnect(): void {
    if (this.reconnectTimer !== null) return;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.backoffMs = Math.min(this.backoffMs * 2, 5000);
      this.connect();
    }, this.backoffMs);
  }

  close(): void {
    this.stopped = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.transport?.close();
    this.scene.connected = false;
  }

  /** Convert a canvas click into a world goal and send it. */
  clickGoal(view: View, canvasX: number, canvasY: number, z: number): boolean {
    const [wx, wy] = canvasToWorld(view, canvasX, canvasY);
    return this.sendGoal(wx, wy, z);
  }

  sendGoal(x: number, y: number, z: number): boolean {
    if (!this.scene.connected || this.transport === null) {
      this.events.onNotice?.("not connected: goal ignored");
      return false;
    }
    this.transport.send(encodeGoal(x, y, z));
    return true;
  }

  sendReset(): boolean {
    if (!this.scene.connected || this.transport === null) return false;
    this.transport.send(encodeReset());
    return true;
  }
}
