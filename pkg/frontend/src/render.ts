/** Canvas drawing for the map and telemetry panels (DOM-facing layer). */

import { EXTENSION_CHART, rollGaugeAngle, sparkline, toSegments,
         type ChartSpec } from "./charts.js";
import { hillshade } from "./hillshade.js";
import { vehicleOutline, worldToScreen, type Viewport } from "./maptransform.js";
import type { RingBuffer, ViewState } from "./viewstate.js";

const EXT_COLORS = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4"];

export class MapRenderer {
  private shadeCanvas: HTMLCanvasElement | null = null;
  private shadedSeq = -1;

  constructor(private canvas: HTMLCanvasElement) {}

  draw(view: ViewState, vp: Viewport,
       preview: { x: number; y: number; psi: number } | null): void {
    const ctx = this.canvas.getContext("2d")!;
    ctx.fillStyle = "#1c2320";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (view.terrain) {
      if (this.shadedSeq !== view.terrain.seq) {
        const raster = hillshade(view.terrain);
        const img = new ImageData(raster, view.terrain.ncols, view.terrain.nrows);
        this.shadeCanvas = document.createElement("canvas");
        this.shadeCanvas.width = view.terrain.ncols;
        this.shadeCanvas.height = view.terrain.nrows;
        this.shadeCanvas.getContext("2d")!.putImageData(img, 0, 0);
        this.shadedSeq = view.terrain.seq;
      }
      const t = view.terrain;
      const [x0, y0] = worldToScreen(vp, t.origin[0],
                                     t.origin[1] + (t.nrows - 1) * t.cellsize);
      const [x1, y1] = worldToScreen(vp, t.origin[0] + (t.ncols - 1) * t.cellsize,
                                     t.origin[1]);
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(this.shadeCanvas!, x0, y0, x1 - x0, y1 - y0);
    }
    for (const m of view.markers) {
      this.drawMarker(ctx, vp, m.x, m.y, m.psi, {
        pending: "#cccccc", active: "#ffffff", rejected: "#e6194b",
        done: "#3cb44b",
      }[m.status]);
    }
    if (preview) this.drawMarker(ctx, vp, preview.x, preview.y, preview.psi, "#ffd700");
    if (view.latest) {
      const pose = view.latest.pose;
      const polys = vehicleOutline([pose[0], pose[1], pose[2]]);
      ctx.strokeStyle = "#ffe119";
      ctx.lineWidth = 1.5;
      for (const poly of polys) {
        ctx.beginPath();
        poly.forEach(([wx, wy], k) => {
          const [sx, sy] = worldToScreen(vp, wx, wy);
          if (k === 0) ctx.moveTo(sx, sy);
          else ctx.lineTo(sx, sy);
        });
        ctx.closePath();
        ctx.stroke();
      }
      const [tx, ty] = view.latest.target;
      this.drawMarker(ctx, vp, tx, ty, view.latest.target[2], "#ffffff");
    }
  }

  private drawMarker(ctx: CanvasRenderingContext2D, vp: Viewport,
                     x: number, y: number, psi: number, color: string): void {
    const [sx, sy] = worldToScreen(vp, x, y);
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(sx, sy, 7, 0, 2 * Math.PI);
    ctx.stroke();
    const [hx, hy] = worldToScreen(vp, x + 2.5 * Math.cos(psi),
                                   y + 2.5 * Math.sin(psi));
    ctx.beginPath();
    ctx.moveTo(sx, sy);
    ctx.lineTo(hx, hy);
    ctx.stroke();
  }
}

export class TelemetryRenderer {
  constructor(private extCanvas: HTMLCanvasElement,
              private forceCanvas: HTMLCanvasElement,
              private gaugeCanvas: HTMLCanvasElement,
              private rewardCanvas: HTMLCanvasElement) {}

  draw(view: ViewState): void {
    const now = view.latest ? view.latest.t / 10 : 0;
    this.strip(this.extCanvas, view.extensions, now, {
      ...EXTENSION_CHART,
      width: this.extCanvas.width, height: this.extCanvas.height,
    });
    const fmax = 120000;
    this.strip(this.forceCanvas, view.forces, now, {
      windowS: 60, yMin: -fmax * 0.2, yMax: fmax,
      width: this.forceCanvas.width, height: this.forceCanvas.height,
    });
    this.gauge(view);
    this.spark(view, now);
  }

  private strip(canvas: HTMLCanvasElement, buffers: readonly RingBuffer[],
                now: number, spec: ChartSpec): void {
    const ctx = canvas.getContext("2d")!;
    ctx.fillStyle = "#10150f";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    buffers.forEach((buf, i) => {
      ctx.strokeStyle = EXT_COLORS[i % EXT_COLORS.length];
      ctx.lineWidth = 1;
      for (const seg of toSegments(buf, spec, now)) {
        ctx.beginPath();
        seg.forEach(([x, y], k) => (k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
        ctx.stroke();
      }
    });
  }

  private gauge(view: ViewState): void {
    const ctx = this.gaugeCanvas.getContext("2d")!;
    const w = this.gaugeCanvas.width;
    const h = this.gaugeCanvas.height;
    ctx.fillStyle = "#10150f";
    ctx.fillRect(0, 0, w, h);
    const cx = w / 2;
    const cy = h * 0.85;
    const r = Math.min(w, h) * 0.6;
    ctx.strokeStyle = "#888";
    ctx.beginPath();
    ctx.arc(cx, cy, r, Math.PI, 2 * Math.PI);
    ctx.stroke();
    const roll = view.latest ? view.latest.roll : 0;
    const a = rollGaugeAngle(roll) - Math.PI / 2;
    ctx.strokeStyle = Math.abs(roll) > Math.PI / 24 ? "#e6194b" : "#3cb44b";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(cx, cy);
    ctx.lineTo(cx + r * Math.sin(a + Math.PI / 2) * Math.sign(1),
               cy - r * Math.cos(a + Math.PI / 2) * Math.sign(1));
    ctx.stroke();
    ctx.fillStyle = "#ccc";
    ctx.font = "11px monospace";
    ctx.fillText(`roll ${(roll * 180 / Math.PI).toFixed(1)} deg`, 6, 14);
  }

  private spark(view: ViewState, now: number): void {
    const ctx = this.rewardCanvas.getContext("2d")!;
    const w = this.rewardCanvas.width;
    const h = this.rewardCanvas.height;
    ctx.fillStyle = "#10150f";
    ctx.fillRect(0, 0, w, h);
    const line = sparkline(view.reward, w, h, now);
    ctx.strokeStyle = "#3cb44b";
    ctx.beginPath();
    line.forEach(([x, y], k) => (k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    ctx.stroke();
  }
}
