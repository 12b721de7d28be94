import { describe, expect, it } from "vitest";
import { makeSetTarget, parseServerMessage,
         validateClientMessage } from "../src/protocol.js";

describe("client message validation", () => {
  it("accepts a well-formed set_target", () => {
    expect(validateClientMessage({ type: "set_target", x: 25, y: 0, psi: 0 }))
      .toBe(true);
  });

  it("rejects set_target with missing or non-finite fields", () => {
    expect(validateClientMessage({ type: "set_target", x: 25, y: 0 })).toBe(false);
    expect(validateClientMessage({ type: "set_target", x: NaN, y: 0, psi: 0 }))
      .toBe(false);
    expect(validateClientMessage({ type: "set_target", x: "25", y: 0, psi: 0 }))
      .toBe(false);
  });

  it("accepts control and queue messages", () => {
    expect(validateClientMessage({ type: "pause" })).toBe(true);
    expect(validateClientMessage({ type: "resume" })).toBe(true);
    expect(validateClientMessage({ type: "reset", scenario: "route" })).toBe(true);
    expect(validateClientMessage({ type: "select_policy", name: "best.ckpt" }))
      .toBe(true);
    expect(validateClientMessage({
      type: "queue_targets",
      targets: [{ x: 1, y: 2, psi: 0.1 }, { x: 3, y: 4, psi: -0.2 }],
    })).toBe(true);
  });

  it("rejects unknown types", () => {
    expect(validateClientMessage({ type: "levitate" })).toBe(false);
  });

  it("makeSetTarget emits a schema-valid message", () => {
    const msg = makeSetTarget(25, 0, 0);
    expect(validateClientMessage(msg)).toBe(true);
    expect(msg).toEqual({ type: "set_target", x: 25, y: 0, psi: 0 });
    expect(() => makeSetTarget(NaN, 0, 0)).toThrow();
  });
});

describe("server message parsing", () => {
  const state = {
    type: "state", seq: 3, t: 10, pose: [1, 2, 0.1], v: 0.5,
    roll: 0.01, pitch: 0.0, extensions: [0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
    forces: [1, 2, 3, 4, 5, 6], reward: { total: 0.5 },
    target: [25, 0, 0], paused: false,
  };

  it("parses a state message", () => {
    const msg = parseServerMessage(JSON.stringify(state));
    expect(msg?.type).toBe("state");
  });

  it("rejects malformed frames", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "state", seq: 1 })))
      .toBeNull();
    expect(parseServerMessage(JSON.stringify({ ...state, extensions: [1] })))
      .toBeNull();
    expect(parseServerMessage(JSON.stringify({ ...state, seq: "x" })))
      .toBeNull();
  });

  it("checks terrain payload sizing", () => {
    const ok = { type: "terrain", seq: 1, ncols: 2, nrows: 2, cellsize: 0.1,
                 origin: [0, 0], heights: [0, 0, 0, 0] };
    expect(parseServerMessage(JSON.stringify(ok))?.type).toBe("terrain");
    const bad = { ...ok, heights: [0, 0, 0] };
    expect(parseServerMessage(JSON.stringify(bad))).toBeNull();
  });
});
