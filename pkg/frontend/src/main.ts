/** Cockpit entry point: socket wiring, bounded ingestion queue, render loop.
 *
 * Message handling and rendering are decoupled: the socket handler validates
 * and queues, the animation-frame loop drains the queue into the view state
 * and repaints.  The render loop never blocks ingestion.
 */

import { fitViewport, type Viewport } from "./maptransform.js";
import { parseServerMessage, type ClientMessage } from "./protocol.js";
import { MapRenderer, TelemetryRenderer } from "./render.js";
import { TargetInput } from "./targetinput.js";
import { ViewState } from "./viewstate.js";

const QUEUE_LIMIT = 512;

function connectUrl(): string {
  const params = new URLSearchParams(location.search);
  return params.get("bridge") ?? `ws://${location.hostname || "127.0.0.1"}:8700`;
}

function main(): void {
  const mapCanvas = document.getElementById("map") as HTMLCanvasElement;
  const extCanvas = document.getElementById("extensions") as HTMLCanvasElement;
  const forceCanvas = document.getElementById("forces") as HTMLCanvasElement;
  const gaugeCanvas = document.getElementById("gauge") as HTMLCanvasElement;
  const rewardCanvas = document.getElementById("reward") as HTMLCanvasElement;
  const statusEl = document.getElementById("status")!;

  const view = new ViewState();
  const queue: string[] = [];
  let socket: WebSocket | null = null;
  let connected = false;

  const send = (msg: ClientMessage) => {
    if (socket && connected) socket.send(JSON.stringify(msg));
  };
  const input = new TargetInput((m) => send(m), () => connected);

  function connect(): void {
    socket = new WebSocket(connectUrl());
    socket.addEventListener("open", () => {
      connected = true;
      view.reset();            // fresh buffers; server resends terrain
      input.flushOffline();
      statusEl.textContent = "connected";
    });
    socket.addEventListener("close", () => {
      connected = false;
      statusEl.textContent = "disconnected - retrying";
      setTimeout(connect, 1000);
    });
    socket.addEventListener("message", (ev) => {
      if (queue.length < QUEUE_LIMIT) queue.push(String(ev.data));
      // overflow drops newest; the next state message resynchronizes
    });
  }
  connect();

  let viewport: Viewport = fitViewport(mapCanvas.width, mapCanvas.height,
                                       -30, -30, 30, 30);
  const mapRenderer = new MapRenderer(mapCanvas);
  const telemetry = new TelemetryRenderer(extCanvas, forceCanvas,
                                          gaugeCanvas, rewardCanvas);

  mapCanvas.addEventListener("pointerdown", (e) => {
    const r = mapCanvas.getBoundingClientRect();
    input.pointerDown(e.clientX - r.left, e.clientY - r.top);
  });
  mapCanvas.addEventListener("pointermove", (e) => {
    const r = mapCanvas.getBoundingClientRect();
    input.pointerMove(e.clientX - r.left, e.clientY - r.top);
  });
  mapCanvas.addEventListener("pointerup", () => {
    const vehicle: [number, number] = view.latest
      ? [view.latest.pose[0], view.latest.pose[1]] : [0, 0];
    const result = input.pointerUp(viewport, vehicle);
    if (result) {
      view.placeMarker(result.message.x, result.message.y, result.message.psi);
      statusEl.textContent = result.queuedOffline
        ? "target queued (offline)" : "target sent";
    }
  });
  (document.getElementById("pause") as HTMLButtonElement)
    .addEventListener("click", () => send({ type: "pause" }));
  (document.getElementById("resume") as HTMLButtonElement)
    .addEventListener("click", () => send({ type: "resume" }));
  (document.getElementById("reset") as HTMLButtonElement)
    .addEventListener("click", () => send({ type: "reset" }));

  function frame(): void {
    for (const raw of queue.splice(0, queue.length)) {
      const msg = parseServerMessage(raw);
      if (msg) view.apply(msg);
    }
    if (view.terrain) {
      const t = view.terrain;
      viewport = fitViewport(mapCanvas.width, mapCanvas.height,
                             t.origin[0], t.origin[1],
                             t.origin[0] + (t.ncols - 1) * t.cellsize,
                             t.origin[1] + (t.nrows - 1) * t.cellsize);
    }
    const vehicle: [number, number] = view.latest
      ? [view.latest.pose[0], view.latest.pose[1]] : [0, 0];
    mapRenderer.draw(view, viewport, input.preview(viewport, vehicle));
    telemetry.draw(view);
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

window.addEventListener("load", main);
