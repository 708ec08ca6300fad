/**
 * Top-down view transform between canvas pixels and world meters.
 * The view is defined by its world-space center, a pixels-per-meter
 * scale, and the canvas size; clicking picks x/y while z comes from a
 * slider.
 */

export interface View {
  centerX: number;   // world x at canvas center [m]
  centerY: number;   // world y at canvas center [m]
  scale: number;     // pixels per meter
  width: number;     // canvas size [px]
  height: number;
}

export function worldToCanvas(view: View, wx: number, wy: number): [number, number] {
  const cx = view.width / 2 + (wx - view.centerX) * view.scale;
  // canvas y grows downward, world y grows upward
  const cy = view.height / 2 - (wy - view.centerY) * view.scale;
  return [cx, cy];
}

export function canvasToWorld(view: View, cx: number, cy: number): [number, number] {
  const wx = view.centerX + (cx - view.width / 2) / view.scale;
  const wy = view.centerY - (cy - view.height / 2) / view.scale;
  return [wx, wy];
}

/** View that fits a world rectangle with a small margin. */
export function fitView(
  width: number,
  height: number,
  xMin: number,
  yMin: number,
  xMax: number,
  yMax: number,
  marginPx = 20,
): View {
  const spanX = Math.max(xMax - xMin, 1e-6);
  const spanY = Math.max(yMax - yMin, 1e-6);
  const scale = Math.min(
    (width - 2 * marginPx) / spanX,
    (height - 2 * marginPx) / spanY,
  );
  return {
    centerX: (xMin + xMax) / 2,
    centerY: (yMin + yMax) / 2,
    scale: Math.max(scale, 1e-6),
    width,
    height,
  };
}
