import { describe, expect, it } from "vitest";
import { EXTENSION_CHART, rollGaugeAngle, sparkline, toSegments } from "../src/charts.js";
import { RingBuffer } from "../src/viewstate.js";

const spec = { ...EXTENSION_CHART, width: 300, height: 100 };

describe("strip chart segments", () => {
  it("locks the extension y-range to [0, 0.5] m", () => {
    expect(EXTENSION_CHART.yMin).toBe(0.0);
    expect(EXTENSION_CHART.yMax).toBe(0.5);
    const buf = new RingBuffer(100);
    buf.push({ t: 60, value: 0.0, gapBefore: false });
    buf.push({ t: 60.1, value: 0.5, gapBefore: false });
    buf.push({ t: 60.2, value: 0.9, gapBefore: false });  // clamped
    const segs = toSegments(buf, spec, 60.2);
    const ys = segs.flat().map(([, y]) => y);
    expect(Math.max(...ys)).toBeLessThanOrEqual(spec.height);
    expect(Math.min(...ys)).toBeGreaterThanOrEqual(0);
    // 0.5 and the clamped 0.9 both map to the top of the chart
    expect(ys[1]).toBeCloseTo(0, 9);
    expect(ys[2]).toBeCloseTo(0, 9);
  });

  it("splits polylines at sequence gaps instead of interpolating", () => {
    const buf = new RingBuffer(100);
    buf.push({ t: 10.0, value: 0.1, gapBefore: false });
    buf.push({ t: 10.1, value: 0.1, gapBefore: false });
    buf.push({ t: 10.9, value: 0.3, gapBefore: true });
    buf.push({ t: 11.0, value: 0.3, gapBefore: false });
    const segs = toSegments(buf, spec, 20.0);
    expect(segs).toHaveLength(2);
    expect(segs[0]).toHaveLength(2);
    expect(segs[1]).toHaveLength(2);
  });

  it("drops samples outside the visible window", () => {
    const buf = new RingBuffer(1000);
    for (let k = 0; k < 900; k++) {
      buf.push({ t: k * 0.1, value: 0.2, gapBefore: false });
    }
    const segs = toSegments(buf, spec, 89.9);
    const count = segs.reduce((n, s) => n + s.length, 0);
    expect(count).toBeLessThanOrEqual(601);
  });
});

describe("roll gauge", () => {
  it("is centered at zero roll and clamps at the dial limits", () => {
    expect(rollGaugeAngle(0)).toBeCloseTo(0, 9);
    expect(rollGaugeAngle(Math.PI / 6)).toBeCloseTo(Math.PI / 2, 9);
    expect(rollGaugeAngle(10)).toBeCloseTo(Math.PI / 2, 9);
    expect(rollGaugeAngle(-10)).toBeCloseTo(-Math.PI / 2, 9);
  });
});

describe("sparkline", () => {
  it("auto-ranges to the window contents", () => {
    const buf = new RingBuffer(100);
    buf.push({ t: 10, value: -1.0, gapBefore: false });
    buf.push({ t: 11, value: 3.0, gapBefore: false });
    const line = sparkline(buf, 100, 50, 11);
    expect(line).toHaveLength(2);
    expect(line[0][1]).toBeCloseTo(50, 6);  // min at the bottom
    expect(line[1][1]).toBeCloseTo(0, 6);   // max at the top
  });

  it("handles an empty buffer", () => {
    expect(sparkline(new RingBuffer(10), 100, 50, 0)).toEqual([]);
  });
});
