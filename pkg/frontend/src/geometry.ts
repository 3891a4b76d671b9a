/** Geometry helpers for the canvas view: predicate boxes, set membership
 * and the tube circles around the nominal plan. */

import type { PredicateShape, StateSnapshot } from "./types.js";

export interface Circle {
  cx: number;
  cy: number;
  r: number;
}

export interface Box {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

/** Membership in the polyhedron G x >= b. */
export function inSet(pred: PredicateShape, x: readonly number[]): boolean {
  return pred.G.every((row, i) => {
    const dot = row.reduce((acc, g, d) => acc + g * x[d], 0);
    return dot >= pred.b[i] - 1e-9;
  });
}

/** Bounding box of an axis-aligned 2-D predicate; rows that are not axis
 * aligned only shrink the drawn box, never grow it. */
export function boundingBox(pred: PredicateShape): Box {
  const box: Box = {
    xMin: -Infinity,
    xMax: Infinity,
    yMin: -Infinity,
    yMax: Infinity,
  };
  pred.G.forEach((row, i) => {
    const b = pred.b[i];
    if (row[0] === 1 && row[1] === 0) box.xMin = Math.max(box.xMin, b);
    if (row[0] === -1 && row[1] === 0) box.xMax = Math.min(box.xMax, -b);
    if (row[0] === 0 && row[1] === 1) box.yMin = Math.max(box.yMin, b);
    if (row[0] === 0 && row[1] === -1) box.yMax = Math.min(box.yMax, -b);
  });
  return box;
}

/** One tube circle per remaining plan instant: center = planned state,
 * radius = the engine-reported tube radius at that instant (original
 * coordinates, worst axis of T rho(i)). */
export function tubeCircles(state: StateSnapshot): Circle[] {
  return state.plan
    .map((p, i) => ({ cx: p[0], cy: p[1], r: state.tube_radii[i] }))
    .filter((_, i) => i >= state.time);
}
