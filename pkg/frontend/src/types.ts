/** Payload shapes of the scheduling service's JSON API. */

export interface PredicateShape {
  /** Unit-norm row directions of the polyhedron G x >= b. */
  G: number[][];
  b: number[];
}

export interface TaskRef {
  k: number;
  stl: string;
  r_max: number;
}

export interface StateSnapshot {
  name: string;
  time: number;
  horizon: number;
  seed: number;
  x: number[];
  /** Nominal plan in original coordinates, one row per time instant. */
  plan: number[][];
  /** Tube radius per plan instant, original coordinates. */
  tube_radii: number[];
  pending_spec: { stl: string; r_max: number } | null;
  accepted: TaskRef[];
  rejected: TaskRef[];
  predicates: Record<string, PredicateShape>;
}

export interface RiskRow {
  stl: string;
  k_assign: number;
  r_max: number;
  bound_at_acceptance: number;
  current_bound: number;
}

export interface SpecOutcome {
  k: number;
  stl: string;
  r_max: number;
  accepted: boolean;
  bound: number | null;
}

export interface AdvanceResponse {
  time: number;
  outcomes: SpecOutcome[];
  risk_table: RiskRow[];
}

export interface SpecQueued {
  queued: boolean;
  at_time: number;
}
