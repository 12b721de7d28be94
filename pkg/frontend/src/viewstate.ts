/** Client-side state: latest vehicle state, bounded telemetry history,
 * target markers, and sequence-gap bookkeeping. Pure data; no DOM. */

import type { ServerMessage, StateMessage, TerrainMessage } from "./protocol.js";

export interface Sample {
  t: number;       // sim time, s
  value: number;
  gapBefore: boolean;  // a sequence gap precedes this sample
}

/** Fixed-capacity ring buffer of chart samples. */
export class RingBuffer {
  private data: Sample[] = [];
  constructor(readonly capacity: number) {}

  push(sample: Sample): void {
    this.data.push(sample);
    if (this.data.length > this.capacity) this.data.shift();
  }

  samples(): readonly Sample[] {
    return this.data;
  }

  clear(): void {
    this.data = [];
  }

  get length(): number {
    return this.data.length;
  }
}

export interface TargetMarker {
  x: number;
  y: number;
  psi: number;
  status: "pending" | "active" | "rejected" | "done";
}

const WINDOW_S = 60;
const RATE_HZ = 10;
const CAPACITY = WINDOW_S * RATE_HZ;

export class ViewState {
  terrain: TerrainMessage | null = null;
  latest: StateMessage | null = null;
  markers: TargetMarker[] = [];
  extensions: RingBuffer[] = Array.from({ length: 6 }, () => new RingBuffer(CAPACITY));
  forces: RingBuffer[] = Array.from({ length: 6 }, () => new RingBuffer(CAPACITY));
  roll = new RingBuffer(CAPACITY);
  reward = new RingBuffer(CAPACITY);
  paused = false;
  lastSeq = -1;
  gaps = 0;
  role: "controller" | "observer" | "unknown" = "unknown";

  apply(msg: ServerMessage): void {
    const gap = this.lastSeq >= 0 && msg.seq > this.lastSeq + 1;
    if (gap) this.gaps += 1;
    this.lastSeq = Math.max(this.lastSeq, msg.seq);
    switch (msg.type) {
      case "hello":
        this.role = msg.role;
        break;
      case "terrain":
        this.terrain = msg;
        break;
      case "state": {
        this.latest = msg;
        this.paused = msg.paused;
        if (msg.paused) break;   // frozen charts while paused
        const t = msg.t / RATE_HZ;
        for (let i = 0; i < 6; i++) {
          this.extensions[i].push({ t, value: msg.extensions[i], gapBefore: gap });
          this.forces[i].push({ t, value: msg.forces[i], gapBefore: gap });
        }
        this.roll.push({ t, value: msg.roll, gapBefore: gap });
        this.reward.push({
          t,
          value: Number(msg.reward["total"] ?? 0),
          gapBefore: gap,
        });
        this.reconcileMarkers(msg.target);
        break;
      }
      case "event":
        if (msg.event === "terminal" || msg.event === "target_missed") {
          const active = this.markers.find((m) => m.status === "active");
          if (active) active.status = "rejected";
        }
        if (msg.event === "target_success") {
          const active = this.markers.find((m) => m.status === "active");
          if (active) active.status = "done";
        }
        break;
    }
  }

  /** Optimistic marker placed on click; confirmed when the server echoes it. */
  placeMarker(x: number, y: number, psi: number): TargetMarker {
    const marker: TargetMarker = { x, y, psi, status: "pending" };
    this.markers.push(marker);
    return marker;
  }

  private reconcileMarkers(target: [number, number, number]): void {
    for (const m of this.markers) {
      const match =
        Math.abs(m.x - target[0]) < 1e-6 && Math.abs(m.y - target[1]) < 1e-6;
      if (match && m.status === "pending") m.status = "active";
      else if (!match && m.status === "active") m.status = "done";
    }
  }

  /** Fresh session (reconnect): buffers cleared, terrain refetched. */
  reset(): void {
    this.terrain = null;
    this.latest = null;
    this.markers = [];
    for (const b of [...this.extensions, ...this.forces, this.roll, this.reward]) {
      b.clear();
    }
    this.lastSeq = -1;
    this.gaps = 0;
  }
}
