/** Browser entry: wire the canvas, z slider, and click-to-goal. */

import { PlannerSession } from "./client.js";
import { renderScene } from "./render.js";
import { fitView, type View } from "./transform.js";
import { wsTransport } from "./transports/ws.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const zSlider = document.getElementById("z") as HTMLInputElement;
const zLabel = document.getElementById("z-label") as HTMLSpanElement;
const noticeEl = document.getElementById("notice") as HTMLDivElement;

const wsUrl = `ws://${location.host}/sock`;
let view: View = fitView(canvas.width, canvas.height, 0, 0, 10, 10);
let fitted = false;

const session = new PlannerSession(() => wsTransport(wsUrl), {
  onChange: () => {
    if (!fitted && session.scene.map) {
      const xs: number[] = [];
      const ys: number[] = [];
      for (const [lo, hi] of session.scene.map.boxes) {
        xs.push(lo[0], hi[0]);
        ys.push(lo[1], hi[1]);
      }
      if (session.scene.state) {
        xs.push(session.scene.state.pos[0]);
        ys.push(session.scene.state.pos[1]);
      }
      if (xs.length) {
        view = fitView(
          canvas.width, canvas.height,
          Math.min(...xs) - 1, Math.min(...ys) - 1,
          Math.max(...xs) + 1, Math.max(...ys) + 1,
        );
        fitted = true;
      }
    }
  },
  onNotice: (text) => {
    noticeEl.textContent = text;
    setTimeout(() => {
      if (noticeEl.textContent === text) noticeEl.textContent = "";
    }, 3000);
  },
});
session.connect();

canvas.addEventListener("click", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const cx = ev.clientX - rect.left;
  const cy = ev.clientY - rect.top;
  const z = parseFloat(zSlider.value);
  session.clickGoal(view, cx, cy, z);
});

zSlider.addEventListener("input", () => {
  zLabel.textContent = `z = ${parseFloat(zSlider.value).toFixed(1)} m`;
});

function frame(): void {
  renderScene(ctx, session.scene, view, true);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
