/** Spec composer: structured form or raw text -> POST /api/spec payload. */

import { precheck } from "./stl.js";

export interface FormInput {
  mode: "form";
  operator: "G" | "F";
  intervalA: number;
  intervalB: number;
  predicate: string;
  rMax: number;
}

export interface RawInput {
  mode: "raw";
  text: string;
  rMax: number;
}

export type ComposerInput = FormInput | RawInput;

export interface SpecPayload {
  stl: string;
  r_max: number;
}

export type ComposeResult =
  | { ok: true; payload: SpecPayload }
  | { ok: false; field: string; message: string };

function checkRisk(rMax: number): string | null {
  if (!Number.isFinite(rMax) || rMax <= 0 || rMax > 1) {
    return "risk budget must lie in (0, 1]";
  }
  return null;
}

/** Validate locally and build the request payload; no request is made for
 * invalid input. */
export function composeSpec(
  input: ComposerInput,
  knownPredicates?: string[],
): ComposeResult {
  const riskProblem = checkRisk(input.rMax);
  if (riskProblem) {
    return { ok: false, field: "r_max", message: riskProblem };
  }
  let text: string;
  if (input.mode === "form") {
    const { intervalA: a, intervalB: b } = input;
    if (!Number.isInteger(a) || !Number.isInteger(b) || a < 0 || b < 0) {
      return {
        ok: false,
        field: "interval",
        message: "interval endpoints must be nonnegative integers",
      };
    }
    if (a > b) {
      return { ok: false, field: "interval", message: `interval [${a},${b}] has a > b` };
    }
    text = `${input.operator}[${a},${b}] in(${input.predicate})`;
  } else {
    text = input.text;
  }
  const parsed = precheck(text, knownPredicates);
  if (!parsed.ok) {
    return {
      ok: false,
      field: "stl",
      message: `${parsed.message} (at position ${parsed.position})`,
    };
  }
  return { ok: true, payload: { stl: text, r_max: input.rMax } };
}
