import { describe, expect, it } from "vitest";
import { encodeGoal, encodeReset, parseServerMessage } from "../src/protocol.js";

describe("protocol", () => {
  it("parses state messages", () => {
    const msg = parseServerMessage(
      JSON.stringify({ type: "state", t: 1.5, pos: [1, 2, 3], vel: [0, 0, 0] }),
    );
    expect(msg).toEqual({ type: "state", t: 1.5, pos: [1, 2, 3], vel: [0, 0, 0] });
  });

  it("parses trajectory messages", () => {
    const ctrl = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]];
    const msg = parseServerMessage(
      JSON.stringify({ type: "trajectory", dt: 0.3, ctrl_pts: ctrl, status: "ok" }),
    );
    expect(msg?.type).toBe("trajectory");
    if (msg?.type === "trajectory") {
      expect(msg.dt).toBe(0.3);
      expect(msg.ctrl_pts).toHaveLength(4);
      expect(msg.status).toBe("ok");
    }
  });

  it("parses map and status messages", () => {
    const map = parseServerMessage(
      JSON.stringify({ type: "map", boxes: [[[0, 0, 0], [1, 1, 1]]] }),
    );
    expect(map?.type).toBe("map");
    const status = parseServerMessage(JSON.stringify({ type: "status", code: "ok" }));
    expect(status).toEqual({ type: "status", code: "ok", message: undefined });
  });

  it("rejects malformed frames instead of throwing", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "state", t: "x" }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "trajectory", dt: -1, ctrl_pts: [] }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "unknown" }))).toBeNull();
    expect(
      parseServerMessage(JSON.stringify({ type: "state", t: 1, pos: [1, 2], vel: [0, 0, 0] })),
    ).toBeNull();
  });

  it("encodes newline-terminated goal and reset messages", () => {
    const line = encodeGoal(1.25, -2, 0.8);
    expect(line.endsWith("\n")).toBe(true);
    expect(JSON.parse(line)).toEqual({ type: "goal", x: 1.25, y: -2, z: 0.8 });
    expect(JSON.parse(encodeReset())).toEqual({ type: "reset" });
  });
});
