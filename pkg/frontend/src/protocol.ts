/** Bridge message schema: runtime validators and constructors.
 *
 * Mirrors the server's JSON message layout; every command we emit must pass
 * its own validator before hitting the socket.
 */

export interface StateMessage {
  type: "state";
  seq: number;
  t: number;
  pose: [number, number, number];
  v: number;
  roll: number;
  pitch: number;
  extensions: number[];
  forces: number[];
  reward: Record<string, number | boolean>;
  target: [number, number, number];
  paused: boolean;
}

export interface TerrainMessage {
  type: "terrain";
  seq: number;
  ncols: number;
  nrows: number;
  cellsize: number;
  origin: [number, number];
  heights: number[];
}

export interface EventMessage {
  type: "event";
  seq: number;
  event: string;
  [key: string]: unknown;
}

export interface HelloMessage {
  type: "hello";
  seq: number;
  proto_version: number;
  role: "controller" | "observer";
}

export type ServerMessage = StateMessage | TerrainMessage | EventMessage | HelloMessage;

export interface SetTargetMessage {
  type: "set_target";
  x: number;
  y: number;
  psi: number;
}

export interface QueueTargetsMessage {
  type: "queue_targets";
  targets: { x: number; y: number; psi: number }[];
}

export type ClientMessage =
  | SetTargetMessage
  | QueueTargetsMessage
  | { type: "pause" }
  | { type: "resume" }
  | { type: "reset"; scenario?: string }
  | { type: "select_policy"; name: string };

const finite = (v: unknown): v is number =>
  typeof v === "number" && Number.isFinite(v);

export function validateClientMessage(msg: unknown): msg is ClientMessage {
  if (typeof msg !== "object" || msg === null) return false;
  const m = msg as Record<string, unknown>;
  switch (m.type) {
    case "set_target":
      return finite(m.x) && finite(m.y) && finite(m.psi);
    case "queue_targets":
      return (
        Array.isArray(m.targets) &&
        m.targets.every(
          (t) =>
            typeof t === "object" && t !== null &&
            finite((t as Record<string, unknown>).x) &&
            finite((t as Record<string, unknown>).y) &&
            finite((t as Record<string, unknown>).psi),
        )
      );
    case "pause":
    case "resume":
      return true;
    case "reset":
      return m.scenario === undefined || typeof m.scenario === "string";
    case "select_policy":
      return typeof m.name === "string" && m.name.length > 0;
    default:
      return false;
  }
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as Record<string, unknown>;
  if (!finite(m.seq)) return null;
  switch (m.type) {
    case "state":
      if (!Array.isArray(m.pose) || m.pose.length !== 3) return null;
      if (!Array.isArray(m.extensions) || m.extensions.length !== 6) return null;
      if (!Array.isArray(m.forces) || m.forces.length !== 6) return null;
      return m as unknown as StateMessage;
    case "terrain":
      if (!finite(m.ncols) || !finite(m.nrows) || !finite(m.cellsize)) return null;
      if (!Array.isArray(m.heights)) return null;
      if (m.heights.length !== (m.ncols as number) * (m.nrows as number)) return null;
      return m as unknown as TerrainMessage;
    case "event":
      return typeof m.event === "string" ? (m as unknown as EventMessage) : null;
    case "hello":
      return finite(m.proto_version) ? (m as unknown as HelloMessage) : null;
    default:
      return null;
  }
}

export function makeSetTarget(x: number, y: number, psi: number): SetTargetMessage {
  const msg: SetTargetMessage = { type: "set_target", x, y, psi };
  if (!validateClientMessage(msg)) {
    throw new Error("refusing to build an invalid set_target message");
  }
  return msg;
}
