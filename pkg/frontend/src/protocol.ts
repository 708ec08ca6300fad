/**
 * Wire protocol of the simulation service: newline-delimited JSON.
 * One decoder per message kind, with strict shape checks so a bad
 * frame never poisons the scene state.
 */

export type Vec3 = [number, number, number];

export interface StateMsg {
  type: "state";
  t: number;
  pos: Vec3;
  vel: Vec3;
}

export interface TrajectoryMsg {
  type: "trajectory";
  dt: number;
  ctrl_pts: Vec3[];
  status?: string;
}

export interface MapMsg {
  type: "map";
  boxes: [Vec3, Vec3][];
}

export interface StatusMsg {
  type: "status";
  code: string;
  message?: string;
}

export type ServerMsg = StateMsg | TrajectoryMsg | MapMsg | StatusMsg;

export interface GoalMsg {
  type: "goal";
  x: number;
  y: number;
  z: number;
}

const isNum = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);

const isVec3 = (v: unknown): v is Vec3 =>
  Array.isArray(v) && v.length === 3 && v.every(isNum);

export function parseServerMessage(line: string): ServerMsg | null {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null) return null;
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "state":
      if (isNum(msg.t) && isVec3(msg.pos) && isVec3(msg.vel)) {
        return { type: "state", t: msg.t, pos: msg.pos, vel: msg.vel };
      }
      return null;
    case "trajectory":
      if (
        isNum(msg.dt) &&
        msg.dt > 0 &&
        Array.isArray(msg.ctrl_pts) &&
        msg.ctrl_pts.length >= 4 &&
        msg.ctrl_pts.every(isVec3)
      ) {
        return {
          type: "trajectory",
          dt: msg.dt,
          ctrl_pts: msg.ctrl_pts as Vec3[],
          status: typeof msg.status === "string" ? msg.status : undefined,
        };
      }
      return null;
    case "map":
      if (
        Array.isArray(msg.boxes) &&
        msg.boxes.every(
          (b) => Array.isArray(b) && b.length === 2 && isVec3(b[0]) && isVec3(b[1]),
        )
      ) {
        return { type: "map", boxes: msg.boxes as [Vec3, Vec3][] };
      }
      return null;
    case "status":
      if (typeof msg.code === "string") {
        return {
          type: "status",
          code: msg.code,
          message: typeof msg.message === "string" ? msg.message : undefined,
        };
      }
      return null;
    default:
      return null;
  }
}

export function encodeGoal(x: number, y: number, z: number): string {
  const msg: GoalMsg = { type: "goal", x, y, z };
  return JSON.stringify(msg) + "\n";
}

export function encodeReset(): string {
  return JSON.stringify({ type: "reset" }) + "\n";
}
