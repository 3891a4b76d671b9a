/** Page wiring: poll state every 500 ms while running, render only
 * server-confirmed snapshots, and route all mutations through the
 * documented POST endpoints. */

import { ApiClient, ApiError } from "./client.js";
import { composeSpec, type ComposerInput } from "./compose.js";
import { AdvanceController } from "./controls.js";
import { appendOutcomes, type LogEntry } from "./log.js";
import { renderRiskTable } from "./risks.js";
import { draw, type Viewport } from "./render.js";
import type { StateSnapshot } from "./types.js";

const POLL_MS = 500;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const client = new ApiClient();
  const controller = new AdvanceController(client);
  const canvas = el<HTMLCanvasElement>("arena");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");

  const vp: Viewport = {
    width: canvas.width,
    height: canvas.height,
    world: { xMin: -12, xMax: 12, yMin: -12, yMax: 12 },
  };

  let lastState: StateSnapshot | null = null;
  let log: LogEntry[] = [];
  const path: number[][] = [];
  let polling = false;

  function showError(message: string): void {
    el("error").textContent = message;
  }

  function renderState(state: StateSnapshot): void {
    lastState = state;
    if (
      path.length === 0 ||
      path[path.length - 1][0] !== state.x[0] ||
      path[path.length - 1][1] !== state.x[1]
    ) {
      path.push([state.x[0], state.x[1]]);
    }
    el("time").textContent = `${state.time} / ${state.horizon}`;
    draw(ctx!, state, vp, path);
  }

  async function refresh(): Promise<void> {
    if (polling) return;
    polling = true;
    try {
      const [state, risks] = await Promise.all([client.state(), client.risks()]);
      renderState(state);
      const tbody = el("risk-rows");
      tbody.innerHTML = "";
      for (const row of renderRiskTable(risks)) {
        const tr = document.createElement("tr");
        for (const cell of [
          row.spec,
          `${row.assignedAt}`,
          row.budget,
          row.boundAtAcceptance,
          row.currentBound,
        ]) {
          const td = document.createElement("td");
          td.textContent = cell;
          tr.appendChild(td);
        }
        tbody.appendChild(tr);
      }
      showError("");
    } catch (err) {
      showError(err instanceof Error ? err.message : String(err));
    } finally {
      polling = false;
    }
  }

  function renderLog(): void {
    const list = el("log");
    list.innerHTML = "";
    for (const entry of log.slice().reverse()) {
      const li = document.createElement("li");
      li.textContent = entry.text;
      li.className = entry.kind;
      list.appendChild(li);
    }
  }

  async function advance(steps: number): Promise<void> {
    try {
      const resp = await controller.requestAdvance(steps);
      log = appendOutcomes(log, resp.outcomes);
      renderLog();
      await refresh();
    } catch (err) {
      showError(err instanceof Error ? err.message : String(err));
    }
  }

  el("advance-1").addEventListener("click", () => void advance(1));
  el("advance-5").addEventListener("click", () => void advance(5));
  el("run-to-end").addEventListener("click", () => {
    const horizon = lastState?.horizon ?? 0;
    void (async () => {
      try {
        const responses = await controller.runToEnd(horizon);
        for (const resp of responses) log = appendOutcomes(log, resp.outcomes);
        renderLog();
        await refresh();
      } catch (err) {
        showError(err instanceof Error ? err.message : String(err));
      }
    })();
  });

  el("spec-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input: ComposerInput = {
      mode: "raw",
      text: el<HTMLInputElement>("spec-text").value,
      rMax: Number(el<HTMLInputElement>("spec-risk").value),
    };
    const known = lastState ? Object.keys(lastState.predicates) : undefined;
    const composed = composeSpec(input, known);
    if (!composed.ok) {
      showError(`${composed.field}: ${composed.message}`);
      return;
    }
    void client
      .submitSpec(composed.payload)
      .then((resp) => {
        showError("");
        el("queue-status").textContent = `queued for step ${resp.at_time}`;
      })
      .catch((err) => {
        if (err instanceof ApiError) showError(`${err.status}: ${err.detail}`);
        else showError(String(err));
      });
  });

  el("reset").addEventListener("click", () => {
    void client.reset(0).then(() => {
      log = [];
      path.length = 0;
      renderLog();
      return refresh();
    });
  });

  void refresh();
  setInterval(() => void refresh(), POLL_MS);
}

document.addEventListener("DOMContentLoaded", main);
