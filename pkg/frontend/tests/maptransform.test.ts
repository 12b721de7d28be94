import { describe, expect, it } from "vitest";
import { fitViewport, resolveGesture, screenToWorld, vehicleOutline,
         worldToScreen } from "../src/maptransform.js";

const vp = fitViewport(800, 800, -30, -30, 30, 30);

describe("coordinate mapping", () => {
  it("round-trips world -> screen -> world", () => {
    const [sx, sy] = worldToScreen(vp, 12.5, -7.25);
    const [x, y] = screenToWorld(vp, sx, sy);
    expect(x).toBeCloseTo(12.5, 9);
    expect(y).toBeCloseTo(-7.25, 9);
  });

  it("maps world +y to screen up", () => {
    const [, syLow] = worldToScreen(vp, 0, -10);
    const [, syHigh] = worldToScreen(vp, 0, +10);
    expect(syHigh).toBeLessThan(syLow);
  });

  it("preserves aspect with non-square canvases", () => {
    const wide = fitViewport(1000, 500, -30, -30, 30, 30);
    const [x0] = worldToScreen(wide, -30, 0);
    const [x1] = worldToScreen(wide, 30, 0);
    const [, y0] = worldToScreen(wide, 0, -30);
    const [, y1] = worldToScreen(wide, 0, 30);
    const scaleX = (x1 - x0) / 60;
    const scaleY = (y0 - y1) / 60;
    expect(scaleX).toBeCloseTo(scaleY, 9);
  });
});

describe("target gesture", () => {
  it("click at (25, 0), drag east -> set_target {25, 0, 0}", () => {
    const down = worldToScreen(vp, 25, 0);
    const up = worldToScreen(vp, 29, 0);   // drag toward +x (east)
    const g = resolveGesture(vp, down, up, [0, 0]);
    expect(g.x).toBeCloseTo(25, 6);
    expect(g.y).toBeCloseTo(0, 6);
    expect(g.psi).toBeCloseTo(0, 6);
  });

  it("drag north gives psi = pi/2", () => {
    const down = worldToScreen(vp, 10, 5);
    const up = worldToScreen(vp, 10, 12);
    const g = resolveGesture(vp, down, up, [0, 0]);
    expect(g.psi).toBeCloseTo(Math.PI / 2, 6);
  });

  it("click without drag defaults the heading to the vehicle bearing", () => {
    const down = worldToScreen(vp, 10, 10);
    const g = resolveGesture(vp, down, [down[0] + 1, down[1]], [0, 0]);
    expect(g.psi).toBeCloseTo(Math.atan2(10, 10), 6);
  });
});

describe("vehicle glyph", () => {
  it("is true to scale: overall length matches the three sections", () => {
    const polys = vehicleOutline([0, 0, 0]);
    expect(polys).toHaveLength(3);
    const xs = polys.flat().map(([x]) => x);
    const span = Math.max(...xs) - Math.min(...xs);
    expect(span).toBeCloseTo(2.5 + 2.0 + 2.5, 6);
  });

  it("bends at the articulation hinges", () => {
    const straight = vehicleOutline([0, 0, 0]);
    const bent = vehicleOutline([0, 0, 0], [0.4, 0.0]);
    // the front section moves when the front hinge bends; the rear stays
    expect(bent[0]).not.toEqual(straight[0]);
    expect(bent[2]).toEqual(straight[2]);
  });
});
