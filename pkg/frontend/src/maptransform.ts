/** World <-> screen mapping for the top-down terrain map (y up in world,
 * y down on canvas) and the click+drag target gesture. */

export interface Viewport {
  canvasWidth: number;
  canvasHeight: number;
  worldXMin: number;
  worldYMin: number;
  worldXMax: number;
  worldYMax: number;
}

export function fitViewport(canvasWidth: number, canvasHeight: number,
                            xmin: number, ymin: number,
                            xmax: number, ymax: number): Viewport {
  // preserve aspect by growing the shorter world side
  const worldW = xmax - xmin;
  const worldH = ymax - ymin;
  const scale = Math.min(canvasWidth / worldW, canvasHeight / worldH);
  const padX = (canvasWidth / scale - worldW) / 2;
  const padY = (canvasHeight / scale - worldH) / 2;
  return {
    canvasWidth, canvasHeight,
    worldXMin: xmin - padX, worldXMax: xmax + padX,
    worldYMin: ymin - padY, worldYMax: ymax + padY,
  };
}

export function worldToScreen(vp: Viewport, x: number, y: number): [number, number] {
  const sx = ((x - vp.worldXMin) / (vp.worldXMax - vp.worldXMin)) * vp.canvasWidth;
  const sy = (1 - (y - vp.worldYMin) / (vp.worldYMax - vp.worldYMin)) * vp.canvasHeight;
  return [sx, sy];
}

export function screenToWorld(vp: Viewport, sx: number, sy: number): [number, number] {
  const x = vp.worldXMin + (sx / vp.canvasWidth) * (vp.worldXMax - vp.worldXMin);
  const y = vp.worldYMin + (1 - sy / vp.canvasHeight) * (vp.worldYMax - vp.worldYMin);
  return [x, y];
}

export interface TargetGesture {
  x: number;
  y: number;
  psi: number;
}

/** Click fixes (x, y); dragging fixes the heading from the drag direction.
 * A plain click (below `minDragPx` of movement) defaults the heading to the
 * bearing from the vehicle to the click point. */
export function resolveGesture(
  vp: Viewport,
  downPx: [number, number],
  upPx: [number, number],
  vehicle: [number, number],
  minDragPx = 6,
): TargetGesture {
  const [x, y] = screenToWorld(vp, downPx[0], downPx[1]);
  const dx = upPx[0] - downPx[0];
  const dy = upPx[1] - downPx[1];
  if (Math.hypot(dx, dy) < minDragPx) {
    return { x, y, psi: Math.atan2(y - vehicle[1], x - vehicle[0]) };
  }
  const [wx, wy] = screenToWorld(vp, upPx[0], upPx[1]);
  return { x, y, psi: Math.atan2(wy - y, wx - x) };
}

/** Outline of the three-section vehicle in world coordinates, true to scale.
 * Returns one polygon per section, given pose and articulation angles. */
export function vehicleOutline(
  pose: [number, number, number],
  articulation: [number, number] = [0, 0],
  sectionLengths: [number, number, number] = [2.5, 2.0, 2.5],
  width = 1.4,
): [number, number][][] {
  const [x, y, yaw] = pose;
  const [front, rear] = articulation;
  const midHalf = sectionLengths[1] / 2;
  const polys: [number, number][][] = [];

  const box = (cx: number, cy: number, heading: number, length: number) => {
    const c = Math.cos(heading);
    const s = Math.sin(heading);
    const hw = width / 2;
    const hl = length / 2;
    const pts: [number, number][] = [
      [hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw],
    ];
    return pts.map(([px, py]): [number, number] =>
      [cx + c * px - s * py, cy + s * px + c * py]);
  };

  // middle section centered on the pose reference
  polys.push(box(x, y, yaw, sectionLengths[1]));
  // front section hinged at +midHalf, rotated by the front articulation
  const fh: [number, number] = [x + Math.cos(yaw) * midHalf, y + Math.sin(yaw) * midHalf];
  const fyaw = yaw + front;
  polys.unshift(box(
    fh[0] + Math.cos(fyaw) * (sectionLengths[0] / 2),
    fh[1] + Math.sin(fyaw) * (sectionLengths[0] / 2),
    fyaw, sectionLengths[0]));
  // rear section hinged at -midHalf, rotated by the rear articulation
  const rh: [number, number] = [x - Math.cos(yaw) * midHalf, y - Math.sin(yaw) * midHalf];
  const ryaw = yaw - rear;
  polys.push(box(
    rh[0] - Math.cos(ryaw) * (sectionLengths[2] / 2),
    rh[1] - Math.sin(ryaw) * (sectionLengths[2] / 2),
    ryaw, sectionLengths[2]));
  return polys;
}
