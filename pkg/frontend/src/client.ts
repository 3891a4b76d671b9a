/** Thin typed wrapper around the scheduling service's JSON API.  The UI
 * never mutates engine state except through these POST endpoints. */

import type {
  AdvanceResponse,
  RiskRow,
  SpecQueued,
  StateSnapshot,
} from "./types.js";
import type { SpecPayload } from "./compose.js";

export type { SpecPayload } from "./compose.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail =
        typeof body?.detail === "string" ? body.detail : JSON.stringify(body);
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  state(): Promise<StateSnapshot> {
    return this.request<StateSnapshot>("/api/state");
  }

  risks(): Promise<RiskRow[]> {
    return this.request<RiskRow[]>("/api/risks");
  }

  advance(steps = 1): Promise<AdvanceResponse> {
    return this.post<AdvanceResponse>("/api/advance", { steps });
  }

  submitSpec(payload: SpecPayload): Promise<SpecQueued> {
    return this.post<SpecQueued>("/api/spec", payload);
  }

  reset(seed: number): Promise<{ time: number; seed: number }> {
    return this.post<{ time: number; seed: number }>("/api/reset", { seed });
  }
}
