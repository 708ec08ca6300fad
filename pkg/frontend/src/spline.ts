/**
 * Uniform cubic B-spline sampling for rendering the trajectory messages.
 * Control points arrive over the wire; the curve is reconstructed here
 * purely for display (no planning happens client-side).
 */

import type { Vec3 } from "./protocol.js";

export interface SampledTrajectory {
  points: Vec3[];
  duration: number;
}

/** De Boor evaluation of a uniform cubic B-spline at normalized span time. */
function deBoor(ctrl: Vec3[], degree: number, u: number): Vec3 {
  // u in [0, n - degree]; span k so that u - k in [0, 1)
  const spans = ctrl.length - degree;
  let k = Math.floor(u);
  if (k > spans - 1) k = spans - 1;
  if (k < 0) k = 0;
  const d: number[][] = [];
  for (let j = 0; j <= degree; j++) {
    d.push([...ctrl[k + j]]);
  }
  for (let r = 1; r <= degree; r++) {
    for (let j = degree; j >= r; j--) {
      // uniform knots: knot(i) = i - degree, local index i = j + k
      const left = j + k - degree;
      const alpha = (u - left) / (degree - r + 1);
      for (let c = 0; c < 3; c++) {
        d[j][c] = (1 - alpha) * d[j - 1][c] + alpha * d[j][c];
      }
    }
  }
  return d[degree] as Vec3;
}

export function sampleTrajectory(
  ctrlPts: Vec3[],
  dt: number,
  degree = 3,
  perSpan = 8,
): SampledTrajectory {
  const spans = ctrlPts.length - degree;
  if (spans < 1) {
    return { points: [...ctrlPts], duration: 0 };
  }
  const points: Vec3[] = [];
  const n = spans * perSpan;
  for (let i = 0; i <= n; i++) {
    points.push(deBoor(ctrlPts, degree, (i / n) * spans));
  }
  return { points, duration: spans * dt };
}
