import { describe, expect, it } from "vitest";
import type { StateMessage } from "../src/protocol.js";
import { RingBuffer, ViewState } from "../src/viewstate.js";

function state(seq: number, t: number, overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state", seq, t, pose: [t * 0.08, 0, 0], v: 0.8,
    roll: 0.01 * Math.sin(t), pitch: 0,
    extensions: [0.12, 0.12, 0.12, 0.12, 0.12, 0.12],
    forces: [45000, 45000, 45000, 45000, 45000, 45000],
    reward: { total: 0.7 }, target: [25, 0, 0], paused: false,
    ...overrides,
  };
}

describe("RingBuffer", () => {
  it("is bounded", () => {
    const buf = new RingBuffer(5);
    for (let i = 0; i < 20; i++) {
      buf.push({ t: i, value: i, gapBefore: false });
    }
    expect(buf.length).toBe(5);
    expect(buf.samples()[0].value).toBe(15);
  });
});

describe("ViewState", () => {
  it("keeps buffers bounded over a long stream", () => {
    const view = new ViewState();
    for (let k = 0; k < 1200; k++) {
      view.apply(state(k + 1, k));
    }
    expect(view.extensions[0].length).toBeLessThanOrEqual(600);
    expect(view.latest?.t).toBe(1199);
  });

  it("marks sequence gaps on the next sample", () => {
    const view = new ViewState();
    view.apply(state(1, 0));
    view.apply(state(2, 1));
    view.apply(state(7, 2));   // dropped frames in between
    const samples = view.roll.samples();
    expect(samples[2].gapBefore).toBe(true);
    expect(view.gaps).toBe(1);
  });

  it("freezes charts while paused", () => {
    const view = new ViewState();
    view.apply(state(1, 0));
    view.apply(state(2, 1, { paused: true }));
    view.apply(state(3, 2, { paused: true }));
    expect(view.roll.length).toBe(1);
    expect(view.paused).toBe(true);
    view.apply(state(4, 3));
    expect(view.roll.length).toBe(2);
  });

  it("reconciles optimistic markers against the active target", () => {
    const view = new ViewState();
    view.placeMarker(25, 0, 0);
    expect(view.markers[0].status).toBe("pending");
    view.apply(state(1, 0, { target: [25, 0, 0] }));
    expect(view.markers[0].status).toBe("active");
    view.apply(state(2, 1, { target: [30, 5, 0.2] }));
    expect(view.markers[0].status).toBe("done");
  });

  it("turns the active marker red on a terminal event", () => {
    const view = new ViewState();
    view.placeMarker(25, 0, 0);
    view.apply(state(1, 0, { target: [25, 0, 0] }));
    view.apply({ type: "event", seq: 2, event: "terminal" });
    expect(view.markers[0].status).toBe("rejected");
  });

  it("reset clears buffers and markers for a fresh session", () => {
    const view = new ViewState();
    view.apply(state(1, 0));
    view.placeMarker(1, 2, 0);
    view.reset();
    expect(view.roll.length).toBe(0);
    expect(view.markers.length).toBe(0);
    expect(view.terrain).toBeNull();
    expect(view.lastSeq).toBe(-1);
  });
});
