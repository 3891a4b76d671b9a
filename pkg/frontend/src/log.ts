/** Event log: plain reducer over server-confirmed task outcomes. */

import type { SpecOutcome } from "./types.js";

export interface LogEntry {
  time: number;
  text: string;
  kind: "accepted" | "rejected";
}

export function appendOutcomes(
  log: readonly LogEntry[],
  outcomes: readonly SpecOutcome[],
): LogEntry[] {
  const next = log.slice();
  for (const o of outcomes) {
    if (o.accepted) {
      const bound = o.bound === null ? "?" : (100 * o.bound).toFixed(1);
      next.push({
        time: o.k,
        kind: "accepted",
        text: `k=${o.k}: accepted "${o.stl}" (risk bound ${bound}%)`,
      });
    } else {
      next.push({
        time: o.k,
        kind: "rejected",
        text: `k=${o.k}: rejected "${o.stl}" (budget ${(100 * o.r_max).toFixed(1)}%)`,
      });
    }
  }
  return next;
}
