import { describe, expect, it } from "vitest";
import { canvasToWorld, fitView, worldToCanvas, type View } from "../src/transform.js";

describe("view transform", () => {
  const view: View = { centerX: 0, centerY: 0, scale: 50, width: 800, height: 600 };

  it("maps the canvas center of a centered view to world origin", () => {
    const [wx, wy] = canvasToWorld(view, 400, 300);
    expect(wx).toBeCloseTo(0, 12);
    expect(wy).toBeCloseTo(0, 12);
  });

  it("round-trips world to canvas and back", () => {
    for (const [x, y] of [[1.5, -2.25], [-3, 4], [0.1, 0.1]]) {
      const [cx, cy] = worldToCanvas(view, x, y);
      const [wx, wy] = canvasToWorld(view, cx, cy);
      expect(wx).toBeCloseTo(x, 10);
      expect(wy).toBeCloseTo(y, 10);
    }
  });

  it("keeps world y up while canvas y grows down", () => {
    const [, cyLow] = worldToCanvas(view, 0, -1);
    const [, cyHigh] = worldToCanvas(view, 0, 1);
    expect(cyLow).toBeGreaterThan(cyHigh);
  });

  it("fits a world rectangle inside the canvas", () => {
    const v = fitView(800, 600, 0, 0, 20, 10);
    const corners = [
      worldToCanvas(v, 0, 0),
      worldToCanvas(v, 20, 10),
      worldToCanvas(v, 0, 10),
      worldToCanvas(v, 20, 0),
    ];
    for (const [cx, cy] of corners) {
      expect(cx).toBeGreaterThanOrEqual(0);
      expect(cx).toBeLessThanOrEqual(800);
      expect(cy).toBeGreaterThanOrEqual(0);
      expect(cy).toBeLessThanOrEqual(600);
    }
  });
});
