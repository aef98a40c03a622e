// Wire protocol: state messages from the server, command messages to it.
// Every outbound command is validated against the same schema the server
// enforces, so the console can never emit a malformed frame.

export interface SpineState {
  extension_mm: number;
  target_mm: number;
  contact: boolean;
}

export interface StateMessage {
  type: "state";
  t_s: number;
  pose: { position: [number, number, number]; quaternion: [number, number, number, number] };
  euler: { roll: number; pitch: number; yaw: number };
  spines: SpineState[];
  velocity: [number, number, number];
  phase: string;
  stability_margin_m: number;
  environment: string;
  stale: boolean;
}

export type CommandMessage =
  | { type: "cmd"; cmd: "move"; dir: [number, number]; config: 1 | 2 }
  | { type: "cmd"; cmd: "stop" }
  | { type: "cmd"; cmd: "level" }
  | { type: "cmd"; cmd: "jump" }
  | { type: "cmd"; cmd: "retract_all" }
  | { type: "cmd"; cmd: "spine"; id: number; target_mm: number }
  | { type: "cmd"; cmd: "reset"; scenario?: string }
  | { type: "cmd"; cmd: "set_terrain"; preset: string };

export const SPINE_COUNT = 14;
export const MAX_EXTENSION_MM = 64;
export const TERRAIN_PRESETS = ["ice", "snow", "sand", "rock", "lab-floor", "water"];

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isVec(v: unknown, n: number): v is number[] {
  return Array.isArray(v) && v.length === n && v.every(isFiniteNumber);
}

/** Parse and validate one frame from the server; null if it is not a
 * well-formed state message (error frames are reported separately). */
export function parseStateMessage(raw: string): StateMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const m = obj as Record<string, unknown>;
  if (m.type !== "state") return null;
  if (!isFiniteNumber(m.t_s)) return null;
  const pose = m.pose as Record<string, unknown> | undefined;
  if (!pose || !isVec(pose.position, 3) || !isVec(pose.quaternion, 4)) return null;
  const euler = m.euler as Record<string, unknown> | undefined;
  if (!euler || !isFiniteNumber(euler.roll) || !isFiniteNumber(euler.pitch) ||
      !isFiniteNumber(euler.yaw)) return null;
  if (!Array.isArray(m.spines) || m.spines.length !== SPINE_COUNT) return null;
  for (const s of m.spines as Record<string, unknown>[]) {
    if (!s || !isFiniteNumber(s.extension_mm) || !isFiniteNumber(s.target_mm) ||
        typeof s.contact !== "boolean") return null;
  }
  if (!isVec(m.velocity, 3)) return null;
  if (typeof m.phase !== "string") return null;
  if (!isFiniteNumber(m.stability_margin_m)) return null;
  if (typeof m.environment !== "string") return null;
  if (typeof m.stale !== "boolean") return null;
  return obj as unknown as StateMessage;
}

export function parseErrorMessage(raw: string): string | null {
  try {
    const obj = JSON.parse(raw);
    if (obj && obj.type === "error" && typeof obj.reason === "string") {
      return obj.reason;
    }
  } catch {
    /* not JSON */
  }
  return null;
}

/** Throws if the command does not satisfy the wire schema. */
export function validateCommand(cmd: CommandMessage): void {
  if (cmd.type !== "cmd") throw new Error("type must be 'cmd'");
  switch (cmd.cmd) {
    case "move": {
      if (!isVec(cmd.dir, 2)) throw new Error("move.dir must be 2 finite numbers");
      if (Math.hypot(cmd.dir[0], cmd.dir[1]) === 0) {
        throw new Error("move.dir must be non-zero");
      }
      if (cmd.config !== 1 && cmd.config !== 2) throw new Error("config must be 1 or 2");
      return;
    }
    case "spine": {
      if (!Number.isInteger(cmd.id) || cmd.id < 0 || cmd.id >= SPINE_COUNT) {
        throw new Error(`spine.id must be an integer in [0, ${SPINE_COUNT - 1}]`);
      }
      if (!isFiniteNumber(cmd.target_mm) || cmd.target_mm < 0 ||
          cmd.target_mm > MAX_EXTENSION_MM) {
        throw new Error(`spine.target_mm must be in [0, ${MAX_EXTENSION_MM}]`);
      }
      return;
    }
    case "set_terrain": {
      if (!TERRAIN_PRESETS.includes(cmd.preset)) {
        throw new Error(`unknown terrain preset '${cmd.preset}'`);
      }
      return;
    }
    case "reset": {
      if (cmd.scenario !== undefined && typeof cmd.scenario !== "string") {
        throw new Error("reset.scenario must be a string");
      }
      return;
    }
    case "stop":
    case "level":
    case "jump":
    case "retract_all":
      return;
    default:
      throw new Error("unknown command");
  }
}

export function buildMove(dir: [number, number], config: 1 | 2): CommandMessage {
  const norm = Math.hypot(dir[0], dir[1]);
  if (norm === 0) throw new Error("direction must be non-zero");
  return { type: "cmd", cmd: "move", dir: [dir[0] / norm, dir[1] / norm], config };
}

export function buildSpine(id: number, targetMm: number): CommandMessage {
  return { type: "cmd", cmd: "spine", id, target_mm: targetMm };
}
