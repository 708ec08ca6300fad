/**
 * Canvas 2D renderer: map boxes, robot pose with its velocity vector,
 * the active trajectory polyline, and (debug) anchor-pair arrows.
 * Pure function of the scene; rendering never mutates it.
 */

import type { SceneState } from "./scene.js";
import { sampleTrajectory } from "./spline.js";
import { worldToCanvas, type View } from "./transform.js";

export interface RenderStats {
  boxes: number;
  trajectoryPoints: number;
  robotDrawn: boolean;
}

export function renderScene(
  ctx: CanvasRenderingContext2D,
  scene: SceneState,
  view: View,
  showPairs = false,
): RenderStats {
  ctx.clearRect(0, 0, view.width, view.height);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, view.width, view.height);
  drawGrid(ctx, view);

  let boxes = 0;
  if (scene.map) {
    ctx.fillStyle = "#8a8a8a";
    for (const [lo, hi] of scene.map.boxes) {
      const [x0, y0] = worldToCanvas(view, lo[0], hi[1]);
      const [x1, y1] = worldToCanvas(view, hi[0], lo[1]);
      ctx.fillRect(x0, y0, x1 - x0, y1 - y0);
      boxes += 1;
    }
  }

  let trajectoryPoints = 0;
  if (scene.trajectory) {
    const sampled = sampleTrajectory(scene.trajectory.ctrl_pts, scene.trajectory.dt);
    trajectoryPoints = sampled.points.length;
    ctx.strokeStyle = scene.trajectory.status === "fallback" ? "#cc8800" : "#1565c0";
    ctx.lineWidth = 2;
    ctx.beginPath();
    sampled.points.forEach((p, i) => {
      const [cx, cy] = worldToCanvas(view, p[0], p[1]);
      if (i === 0) ctx.moveTo(cx, cy);
      else ctx.lineTo(cx, cy);
    });
    ctx.stroke();
  }

  if (showPairs) {
    ctx.strokeStyle = "#9c27b0";
    ctx.lineWidth = 1;
    for (const pair of scene.pairs) {
      const [ax, ay] = worldToCanvas(view, pair.owner[0], pair.owner[1]);
      const [bx, by] = worldToCanvas(view, pair.p[0], pair.p[1]);
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
      ctx.beginPath();
      ctx.arc(bx, by, 2.5, 0, 2 * Math.PI);
      ctx.stroke();
    }
  }

  let robotDrawn = false;
  if (scene.state) {
    const [cx, cy] = worldToCanvas(view, scene.state.pos[0], scene.state.pos[1]);
    ctx.fillStyle = "#d32f2f";
    ctx.beginPath();
    ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
    ctx.fill();
    const [vx, vy] = scene.state.vel;
    const [tx, ty] = worldToCanvas(
      view,
      scene.state.pos[0] + vx * 0.5,
      scene.state.pos[1] + vy * 0.5,
    );
    ctx.strokeStyle = "#d32f2f";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(cx, cy);
    ctx.lineTo(tx, ty);
    ctx.stroke();
    robotDrawn = true;
  }

  if (!scene.connected || scene.status?.code === "plan_failed") {
    ctx.fillStyle = scene.connected ? "#c62828" : "#444444";
    ctx.fillRect(0, 0, view.width, 26);
    ctx.fillStyle = "#ffffff";
    ctx.font = "14px sans-serif";
    ctx.fillText(
      scene.connected ? "planning failed" : "disconnected - reconnecting",
      10,
      18,
    );
  }
  return { boxes, trajectoryPoints, robotDrawn };
}

function drawGrid(ctx: CanvasRenderingContext2D, view: View): void {
  ctx.strokeStyle = "#e0e0e0";
  ctx.lineWidth = 1;
  const step = view.scale; // 1 m grid
  const x0 = (view.width / 2 - view.centerX * view.scale) % step;
  const y0 = (view.height / 2 + view.centerY * view.scale) % step;
  for (let x = x0; x < view.width; x += step) {
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, view.height);
    ctx.stroke();
  }
  for (let y = y0; y < view.height; y += step) {
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(view.width, y);
    ctx.stroke();
  }
}
