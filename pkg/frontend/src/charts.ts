/** Strip-chart geometry: ring buffers in, polyline segments out (pure). */

import type { RingBuffer, Sample } from "./viewstate.js";

export interface ChartSpec {
  width: number;
  height: number;
  windowS: number;   // visible time window
  yMin: number;
  yMax: number;
}

export const EXTENSION_CHART: Omit<ChartSpec, "width" | "height"> = {
  windowS: 60,
  yMin: 0.0,    // full cylinder range is locked on the axis
  yMax: 0.5,
};

export type Polyline = [number, number][];

/** One polyline per contiguous run; sequence gaps split segments so the gap
 * is rendered as a hole, never interpolated across. */
export function toSegments(buffer: RingBuffer, spec: ChartSpec,
                           now: number): Polyline[] {
  const t0 = now - spec.windowS;
  const segments: Polyline[] = [];
  let current: Polyline = [];
  for (const s of buffer.samples()) {
    if (s.t < t0) continue;
    if (s.gapBefore && current.length > 0) {
      segments.push(current);
      current = [];
    }
    const x = ((s.t - t0) / spec.windowS) * spec.width;
    const clamped = Math.min(Math.max(s.value, spec.yMin), spec.yMax);
    const y = spec.height
      - ((clamped - spec.yMin) / (spec.yMax - spec.yMin)) * spec.height;
    current.push([x, y]);
  }
  if (current.length > 0) segments.push(current);
  return segments;
}

/** Needle angle for the roll gauge: radians mapped onto a dial that spans
 * [-limit, +limit] across [-90 deg, +90 deg] of needle travel. */
export function rollGaugeAngle(roll: number, limitRad = Math.PI / 6): number {
  const clamped = Math.min(Math.max(roll, -limitRad), limitRad);
  return (clamped / limitRad) * (Math.PI / 2);
}

/** Auto-ranged sparkline for the reward channel. */
export function sparkline(buffer: RingBuffer, width: number, height: number,
                          now: number, windowS = 60): Polyline {
  const samples = buffer.samples().filter((s: Sample) => s.t >= now - windowS);
  if (samples.length === 0) return [];
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of samples) {
    lo = Math.min(lo, s.value);
    hi = Math.max(hi, s.value);
  }
  const span = Math.max(hi - lo, 1e-9);
  return samples.map((s): [number, number] => [
    ((s.t - (now - windowS)) / windowS) * width,
    height - ((s.value - lo) / span) * height,
  ]);
}
