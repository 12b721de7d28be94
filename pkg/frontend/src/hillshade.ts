/** Hillshaded RGBA raster from a height grid (pure; paintable via ImageData). */

import type { TerrainMessage } from "./protocol.js";

export function hillshade(terrain: TerrainMessage,
                          sunAzimuth = Math.PI / 4,
                          sunAltitude = Math.PI / 4): Uint8ClampedArray<ArrayBuffer> {
  const { ncols, nrows, cellsize, heights } = terrain;
  const out = new Uint8ClampedArray(new ArrayBuffer(ncols * nrows * 4));
  const sunZ = Math.sin(sunAltitude);
  const sunX = Math.cos(sunAltitude) * Math.cos(sunAzimuth);
  const sunY = Math.cos(sunAltitude) * Math.sin(sunAzimuth);
  let hmin = Infinity;
  let hmax = -Infinity;
  for (const h of heights) {
    if (h < hmin) hmin = h;
    if (h > hmax) hmax = h;
  }
  const span = Math.max(hmax - hmin, 1e-9);

  for (let j = 0; j < nrows; j++) {
    for (let i = 0; i < ncols; i++) {
      const h = heights[j * ncols + i];
      const hx = heights[j * ncols + Math.min(i + 1, ncols - 1)]
        - heights[j * ncols + Math.max(i - 1, 0)];
      const hy = heights[Math.min(j + 1, nrows - 1) * ncols + i]
        - heights[Math.max(j - 1, 0) * ncols + i];
      // surface normal of z = h(x, y)
      const nx = -hx / (2 * cellsize);
      const ny = -hy / (2 * cellsize);
      const inv = 1 / Math.hypot(nx, ny, 1);
      const light = Math.max(0.15, (nx * sunX + ny * sunY + sunZ) * inv);
      const tone = 0.35 + 0.5 * ((h - hmin) / span);
      const v = Math.round(255 * Math.min(1, light * tone + 0.15));
      // canvas rows run top-down; world rows bottom-up
      const row = nrows - 1 - j;
      const k = (row * ncols + i) * 4;
      out[k] = Math.round(v * 0.72);
      out[k + 1] = Math.round(v * 0.80);
      out[k + 2] = Math.round(v * 0.62);
      out[k + 3] = 255;
    }
  }
  return out;
}
