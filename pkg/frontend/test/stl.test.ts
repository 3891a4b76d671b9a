import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { precheck } from "../src/stl.js";

const errors = JSON.parse(
  readFileSync(new URL("./fixtures/error_responses.json", import.meta.url), "utf8"),
);

describe("grammar pre-check", () => {
  it("accepts the shipped scenario tasks", () => {
    for (const text of [
      "true",
      "G[0,40] (in(S) & !in(O))",
      "F[15,25] (in(T1) | in(T2))",
      "F[5,10] in(C)",
      "F[5,10] G[0,5] in(H)",
      "in(S) U[0,9] in(C)",
    ]) {
      const res = precheck(text);
      expect(res.ok, text).toBe(true);
    }
  });

  it("collects referenced predicate names", () => {
    const res = precheck("G[0,40] (in(S) & !in(O))");
    expect(res.ok && res.predicates).toEqual(["O", "S"]);
  });

  it("bounds how far past assignment a task can reach", () => {
    const res = precheck("F[5,10] G[0,5] in(H)");
    expect(res.ok && res.depthBound).toBe(15);
  });

  it("flags the same position as the server for an unclosed interval", () => {
    // the recorded 400 response for this exact input names position 7
    const res = precheck("F[5,10 in(C)");
    expect(res.ok).toBe(false);
    if (!res.ok) {
      expect(errors.parse_400.body.detail).toContain(`position ${res.position}`);
      expect(res.position).toBe(7);
    }
  });

  it("rejects an interval with a > b", () => {
    const res = precheck("G[7,3] in(S)");
    expect(res.ok).toBe(false);
    if (!res.ok) expect(res.message).toContain("a > b");
  });

  it("rejects trailing input and bad characters with positions", () => {
    const trailing = precheck("true true");
    expect(!trailing.ok && trailing.position).toBe(5);
    const bad = precheck("in(S) @ in(C)");
    expect(!bad.ok && bad.position).toBe(6);
  });

  it("checks predicate names against the known table when given", () => {
    expect(precheck("in(S)", ["S", "O"]).ok).toBe(true);
    const res = precheck("in(Z)", ["S", "O"]);
    expect(res.ok).toBe(false);
    if (!res.ok) expect(res.message).toContain("Z");
  });
});
