/** Pointer state machine for the click+drag target gesture. */

import { resolveGesture, type Viewport } from "./maptransform.js";
import { makeSetTarget, type SetTargetMessage } from "./protocol.js";

export interface GestureResult {
  message: SetTargetMessage;
  queuedOffline: boolean;
}

export class TargetInput {
  private down: [number, number] | null = null;
  private last: [number, number] | null = null;
  /** messages held while disconnected, flushed on reconnect */
  readonly offlineQueue: SetTargetMessage[] = [];

  constructor(
    private send: (msg: SetTargetMessage) => void,
    private connected: () => boolean,
  ) {}

  pointerDown(px: number, py: number): void {
    this.down = [px, py];
    this.last = [px, py];
  }

  pointerMove(px: number, py: number): void {
    if (this.down) this.last = [px, py];
  }

  /** Finish the gesture; returns the emitted message (or null when no
   * gesture was in progress). */
  pointerUp(vp: Viewport, vehicle: [number, number]): GestureResult | null {
    if (!this.down || !this.last) return null;
    const gesture = resolveGesture(vp, this.down, this.last, vehicle);
    this.down = null;
    this.last = null;
    const message = makeSetTarget(gesture.x, gesture.y, gesture.psi);
    if (this.connected()) {
      this.send(message);
      return { message, queuedOffline: false };
    }
    this.offlineQueue.push(message);
    return { message, queuedOffline: true };
  }

  /** drag preview heading for rendering, while the pointer is down */
  preview(vp: Viewport, vehicle: [number, number]) {
    if (!this.down || !this.last) return null;
    return resolveGesture(vp, this.down, this.last, vehicle);
  }

  flushOffline(): void {
    while (this.offlineQueue.length > 0) {
      const msg = this.offlineQueue.shift()!;
      this.send(msg);
    }
  }
}
