import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { acceptanceSummary, renderRiskTable } from "../src/risks.js";
import type { RiskRow } from "../src/types.js";

function fixture<T>(name: string): T {
  return JSON.parse(
    readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf8"),
  );
}

describe("risk table rendering", () => {
  const risks = fixture<RiskRow[]>("risks_mid.json");

  it("is a pure function of the /api/risks response", () => {
    const snapshot = JSON.stringify(risks);
    const a = renderRiskTable(risks);
    const b = renderRiskTable(risks);
    expect(a).toEqual(b);
    expect(JSON.stringify(risks)).toBe(snapshot); // input not mutated
  });

  it("renders the engine-recorded bounds as percentages", () => {
    const rows = renderRiskTable(risks);
    expect(rows).toHaveLength(risks.length);
    const safety = rows.find((r) => r.spec.includes("in(S)"));
    expect(safety).toBeDefined();
    expect(safety!.budget).toBe("50.0%");
    expect(safety!.boundAtAcceptance).toBe("40.0%");
  });

  it("sorts by assignment step", () => {
    const shuffled = risks.slice().reverse();
    const rows = renderRiskTable(shuffled);
    const order = rows.map((r) => r.assignedAt);
    expect(order).toEqual(order.slice().sort((a, b) => a - b));
  });
});

describe("reject flow", () => {
  const flow = fixture<{
    risks_before: RiskRow[];
    advance: { outcomes: { accepted: boolean; stl: string }[] };
    risks_after: RiskRow[];
  }>("reject_flow.json");

  it("shows the rejection and leaves the risk table unchanged", () => {
    expect(flow.advance.outcomes).toHaveLength(1);
    expect(flow.advance.outcomes[0].accepted).toBe(false);
    // acceptance-time content identical: no task added or dropped
    expect(acceptanceSummary(flow.risks_after)).toEqual(
      acceptanceSummary(flow.risks_before),
    );
  });
});
