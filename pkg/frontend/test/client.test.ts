import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/client.js";
import { appendOutcomes } from "../src/log.js";
import type { AdvanceResponse, StateSnapshot } from "../src/types.js";

function fixture<T>(name: string): T {
  return JSON.parse(
    readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf8"),
  );
}

function fakeFetch(routes: Record<string, { status: number; body: unknown }>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const impl = (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const route = routes[url];
    if (!route) throw new Error(`no route for ${url}`);
    return Promise.resolve(
      new Response(JSON.stringify(route.body), { status: route.status }),
    );
  };
  return { impl, calls };
}

describe("api client", () => {
  it("returns parsed snapshots from GET /api/state", async () => {
    const snapshot = fixture<StateSnapshot>("state_initial.json");
    const { impl } = fakeFetch({
      "/api/state": { status: 200, body: snapshot },
    });
    const client = new ApiClient("", impl);
    const state = await client.state();
    expect(state.time).toBe(0);
    expect(state.horizon).toBe(40);
    expect(Object.keys(state.predicates)).toContain("S");
  });

  it("posts JSON bodies to the documented endpoints only", async () => {
    const { impl, calls } = fakeFetch({
      "/api/advance": {
        status: 200,
        body: { time: 1, outcomes: [], risk_table: [] },
      },
    });
    await new ApiClient("", impl).advance(1);
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("/api/advance");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ steps: 1 });
  });

  it("surfaces recorded service errors with status and detail", async () => {
    const errors = fixture<Record<string, { status: number; body: { detail: string } }>>(
      "error_responses.json",
    );
    for (const key of ["parse_400", "horizon_409", "risk_422"] as const) {
      const { impl } = fakeFetch({
        "/api/spec": { status: errors[key].status, body: errors[key].body },
      });
      const client = new ApiClient("", impl);
      await expect(
        client.submitSpec({ stl: "x", r_max: 0.5 }),
      ).rejects.toMatchObject({
        status: errors[key].status,
        detail: errors[key].body.detail,
      });
    }
  });

  it("wraps failures as ApiError", async () => {
    const { impl } = fakeFetch({
      "/api/state": { status: 500, body: { detail: "boom" } },
    });
    await expect(new ApiClient("", impl).state()).rejects.toBeInstanceOf(ApiError);
  });
});

describe("event log over recorded flows", () => {
  it("logs the accept flow with its reported bound", () => {
    const flow = fixture<{ advance: AdvanceResponse }>("spec_accept_flow.json");
    const log = appendOutcomes([], flow.advance.outcomes);
    expect(log).toHaveLength(1);
    expect(log[0].kind).toBe("accepted");
    expect(log[0].text).toContain("40.0%");
  });

  it("logs the reject flow as rejected", () => {
    const flow = fixture<{ advance: AdvanceResponse }>("reject_flow.json");
    const log = appendOutcomes([], flow.advance.outcomes);
    expect(log).toHaveLength(1);
    expect(log[0].kind).toBe("rejected");
    expect(log[0].text).toContain('rejected "G[1,1] in(C)"');
  });
});
