/** Telemetry cadence: the render loop must repaint at >= 8 Hz against a
 * simulated 10 Hz state stream, with ingestion decoupled from painting. */
import { describe, expect, it } from "vitest";
import type { StateMessage } from "../src/protocol.js";
import { parseServerMessage } from "../src/protocol.js";
import { toSegments, EXTENSION_CHART } from "../src/charts.js";
import { ViewState } from "../src/viewstate.js";

function stateJson(seq: number, t: number): string {
  return JSON.stringify({
    type: "state", seq, t, pose: [t * 0.08, 0, 0], v: 0.8, roll: 0, pitch: 0,
    extensions: [0.12, 0.13, 0.12, 0.13, 0.12, 0.13],
    forces: [45e3, 45e3, 45e3, 45e3, 45e3, 45e3],
    reward: { total: 0.7 }, target: [25, 0, 0], paused: false,
  });
}

/** Deterministic frame clock standing in for requestAnimationFrame. */
class FakeRaf {
  now = 0;
  constructor(readonly frameMs: number) {}
  tick(): number {
    this.now += this.frameMs;
    return this.now;
  }
}

it("renders at >= 8 Hz against a 10 Hz stream over one simulated second", () => {
  const view = new ViewState();
  const queue: string[] = [];
  const raf = new FakeRaf(1000 / 60);   // a 60 Hz display
  let renders = 0;
  let lastPaintedT = -1;

  // producer: 10 Hz messages; consumer: drain + paint every animation frame
  let seq = 0;
  let nextMessageAt = 0;
  while (raf.now < 1000) {
    const now = raf.tick();
    while (nextMessageAt <= now) {
      queue.push(stateJson(++seq, seq));
      nextMessageAt += 100;
    }
    for (const raw of queue.splice(0, queue.length)) {
      const msg = parseServerMessage(raw);
      if (msg) view.apply(msg);
    }
    // the paint itself: build chart geometry from the current buffers
    if (view.latest) {
      const spec = { ...EXTENSION_CHART, width: 300, height: 100 };
      toSegments(view.extensions[0], spec, view.latest.t / 10);
      renders += 1;
      lastPaintedT = view.latest.t;
    }
  }

  expect(renders).toBeGreaterThanOrEqual(8);
  expect(lastPaintedT).toBe(seq);          // nothing stuck in the queue
  expect(view.extensions[0].length).toBe(seq);
});

it("keeps ingesting while rendering is slow (bounded queue, no blocking)", () => {
  const view = new ViewState();
  const queue: string[] = [];
  let seq = 0;
  // renderer stalls for 5 simulated frames; messages keep arriving
  for (let burst = 0; burst < 5; burst++) {
    queue.push(stateJson(++seq, seq));
  }
  expect(queue.length).toBe(5);
  for (const raw of queue.splice(0, queue.length)) {
    const msg = parseServerMessage(raw);
    if (msg) view.apply(msg);
  }
  expect(view.latest?.t).toBe(5);
  expect(view.extensions[0].length).toBe(5);
});
