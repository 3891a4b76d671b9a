/** Advancement controls: single-step, multi-step and run-to-end, with at
 * most one command request in flight.  Requests issued while another is in
 * flight are queued, never concurrent, so the step counter only moves
 * forward in server-confirmed increments. */

import type { AdvanceResponse } from "./types.js";

export interface AdvanceApi {
  advance(steps: number): Promise<AdvanceResponse>;
}

export class AdvanceController {
  private chain: Promise<unknown> = Promise.resolve();
  private inFlight = 0;
  /** Last server-confirmed time; never decreases. */
  confirmedTime = 0;

  constructor(private readonly api: AdvanceApi) {}

  get busy(): boolean {
    return this.inFlight > 0;
  }

  /** Queue one advance command; resolves with the server response. */
  requestAdvance(steps = 1): Promise<AdvanceResponse> {
    const run = this.chain.then(async () => {
      this.inFlight += 1;
      try {
        const resp = await this.api.advance(steps);
        if (resp.time < this.confirmedTime) {
          throw new Error(
            `non-monotonic step counter: ${resp.time} < ${this.confirmedTime}`,
          );
        }
        this.confirmedTime = resp.time;
        return resp;
      } finally {
        this.inFlight -= 1;
      }
    });
    // keep the chain alive even if a command fails
    this.chain = run.catch(() => undefined);
    return run;
  }

  /** Advance one step at a time until the horizon; returns the responses. */
  async runToEnd(horizon: number): Promise<AdvanceResponse[]> {
    const responses: AdvanceResponse[] = [];
    while (this.confirmedTime < horizon) {
      responses.push(await this.requestAdvance(1));
    }
    return responses;
  }
}
