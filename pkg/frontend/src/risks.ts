/** Risk table rendering: a pure function of /api/risks responses. */

import type { RiskRow } from "./types.js";

export interface RiskDisplayRow {
  spec: string;
  assignedAt: number;
  budget: string;
  boundAtAcceptance: string;
  currentBound: string;
  headroom: string;
}

function pct(v: number): string {
  return `${(100 * v).toFixed(1)}%`;
}

export function renderRiskTable(rows: readonly RiskRow[]): RiskDisplayRow[] {
  return rows
    .slice()
    .sort((a, b) => a.k_assign - b.k_assign)
    .map((row) => ({
      spec: row.stl,
      assignedAt: row.k_assign,
      budget: pct(row.r_max),
      boundAtAcceptance: pct(row.bound_at_acceptance),
      currentBound: pct(row.current_bound),
      headroom: pct(row.r_max - row.bound_at_acceptance),
    }));
}

/** Acceptance-time content of a risk table, used to detect real changes
 * (the live bound shrinks as instants resolve; that is not a change of the
 * accepted task set). */
export function acceptanceSummary(
  rows: readonly RiskRow[],
): { stl: string; k_assign: number; bound: number }[] {
  return rows
    .slice()
    .sort((a, b) => a.k_assign - b.k_assign)
    .map((r) => ({ stl: r.stl, k_assign: r.k_assign, bound: r.bound_at_acceptance }));
}
