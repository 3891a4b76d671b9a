/** Plain 2-D canvas rendering of a server-confirmed state snapshot. */

import { boundingBox, tubeCircles } from "./geometry.js";
import type { StateSnapshot } from "./types.js";

export interface Viewport {
  width: number;
  height: number;
  /** World-coordinate extent mapped onto the canvas. */
  world: { xMin: number; xMax: number; yMin: number; yMax: number };
}

export function worldToCanvas(
  vp: Viewport,
  x: number,
  y: number,
): [number, number] {
  const { xMin, xMax, yMin, yMax } = vp.world;
  const px = ((x - xMin) / (xMax - xMin)) * vp.width;
  const py = vp.height - ((y - yMin) / (yMax - yMin)) * vp.height;
  return [px, py];
}

const PRED_COLORS: Record<string, string> = {
  S: "#e8f0e8",
  O: "#d9534f",
  T1: "#5bc0de",
  T2: "#5cb85c",
  C: "#f0ad4e",
  H: "#9b8ce8",
};

export function draw(
  ctx: CanvasRenderingContext2D,
  state: StateSnapshot,
  vp: Viewport,
  realizedPath: readonly number[][],
): void {
  ctx.clearRect(0, 0, vp.width, vp.height);

  for (const [name, pred] of Object.entries(state.predicates)) {
    const box = boundingBox(pred);
    if (!Number.isFinite(box.xMin) || !Number.isFinite(box.yMin)) continue;
    const [x0, y1] = worldToCanvas(vp, box.xMin, box.yMin);
    const [x1, y0] = worldToCanvas(vp, box.xMax, box.yMax);
    ctx.fillStyle = PRED_COLORS[name] ?? "#cccccc";
    ctx.globalAlpha = name === "S" ? 1.0 : 0.55;
    ctx.fillRect(x0, y0, x1 - x0, y1 - y0);
    ctx.globalAlpha = 1.0;
    ctx.fillStyle = "#333333";
    ctx.fillText(name, x0 + 4, y0 + 12);
  }

  ctx.strokeStyle = "#88aaff";
  ctx.setLineDash([4, 3]);
  for (const c of tubeCircles(state)) {
    const [cx, cy] = worldToCanvas(vp, c.cx, c.cy);
    const rx = (c.r / (vp.world.xMax - vp.world.xMin)) * vp.width;
    const ry = (c.r / (vp.world.yMax - vp.world.yMin)) * vp.height;
    ctx.beginPath();
    ctx.ellipse(cx, cy, rx, ry, 0, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.setLineDash([]);

  ctx.strokeStyle = "#3355cc";
  ctx.beginPath();
  state.plan.forEach((p, i) => {
    const [px, py] = worldToCanvas(vp, p[0], p[1]);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();

  ctx.strokeStyle = "#222222";
  ctx.lineWidth = 2;
  ctx.beginPath();
  realizedPath.forEach((p, i) => {
    const [px, py] = worldToCanvas(vp, p[0], p[1]);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  ctx.lineWidth = 1;

  const [hx, hy] = worldToCanvas(vp, state.x[0], state.x[1]);
  ctx.fillStyle = "#cc2222";
  ctx.beginPath();
  ctx.arc(hx, hy, 4, 0, 2 * Math.PI);
  ctx.fill();
}
