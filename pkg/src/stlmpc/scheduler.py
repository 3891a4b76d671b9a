"""Tube-MPC engine with runtime task acceptance.

Each step assembles one MILP over the remaining horizon: nominal states and
inputs, shared per-instant slack radii rho(j), per-instant risk bounds r(j),
the binaries of every accepted constraint block, a measurement-use binary
``a`` (a=0 replans from the measured state) and, when a task arrives, a
rejection binary ``c``.  Accepted tasks keep their risk budget forever; the
previous plan with a=c=1 is always feasible and doubles as the warm-start
incumbent, so the loop can never dead-end after a feasible start.

All optimization runs in normalized coordinates (stationary error
covariance = identity); the public API speaks original coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import stl
from .encoding import EncodedSpec, EncodingError, REJECT_KEY, conjoin, encode, relax_for_rejection
from .milp import BuiltinSolver, MilpModel, MilpSolution, check_solution
from .probability import (
    Normalization,
    RiskCurve,
    SystemModel,
    build_pwl,
    normalize,
    radius_for_risk,
)


class EngineError(Exception):
    pass


class ScenarioInfeasible(EngineError):
    """The very first problem has no solution; the scenario is over-posed."""


class InternalFault(EngineError):
    pass


class SolverDisagreement(InternalFault):
    """A solver claimed infeasibility although a certified solution exists."""


@dataclass
class EngineConfig:
    N: int
    M: float = 1e4
    eps: float = 1e-3
    r_floor: float = 0.01
    r_ceil: float = 1.0
    pwl_segments: int = 8
    mode: str = "chebyshev"
    w_v: float = 0.001
    w_r: float = 1.0
    input_lo: Optional[np.ndarray] = None
    input_hi: Optional[np.ndarray] = None
    node_limit: int = 200000
    gap_tol: float = 1e-6
    cross_check: bool = False
    # deterministic tie-breaks among equal-cost plans: prefer earlier reach
    # witnesses and later motion, so the vehicle holds position until a task
    # forces it to move and then meets reach windows at their opening
    w_witness: float = 1e-2
    w_late: float = 1e-3
    # optional soft speed shaping: inputs beyond fast_frac of the tightened
    # bound pay w_fast extra per unit, so plans keep input headroom instead
    # of riding the bound; off by default
    w_fast: float = 0.0
    fast_frac: float = 0.8

    def __post_init__(self):
        if self.N < 1:
            raise EngineError("horizon must be at least 1")
        if not 0 < self.r_floor <= self.r_ceil <= 1:
            raise EngineError("need 0 < r_floor <= r_ceil <= 1")
        if self.mode not in ("chebyshev", "chi_squared"):
            raise EngineError(
                f"risk mode {self.mode!r} needs a quadratically capable external "
                "solver and is not supported by the MILP path"
                if self.mode == "quadratic"
                else f"unknown risk mode {self.mode!r}"
            )
        if self.input_lo is not None:
            self.input_lo = np.atleast_1d(np.asarray(self.input_lo, dtype=float))
        if self.input_hi is not None:
            self.input_hi = np.atleast_1d(np.asarray(self.input_hi, dtype=float))


@dataclass
class AcceptedSpec:
    text: str
    formula: stl.Formula  # original coordinates, for monitoring
    formula_norm: stl.Formula
    k_assign: int
    r_max: float
    enc: EncodedSpec
    bound_at_acceptance: float
    last_s: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class TubePlan:
    z: np.ndarray  # (N+1, n) normalized nominal states
    v: np.ndarray  # (N, m) nominal inputs
    rho: np.ndarray  # (N+1,)
    r: np.ndarray  # (N+1,)
    a: int = 0
    c: Optional[int] = None


@dataclass
class StepOutcome:
    k: int
    u: np.ndarray
    accepted: Optional[bool]
    a: int
    c: Optional[int]
    objective: float
    solver_status: str
    used_fallback: bool
    plan: TubePlan
    risk_table: list


@dataclass
class VarMap:
    z: Dict[Tuple[int, int], int]
    v: Dict[Tuple[int, int], int]
    t: Dict[Tuple[int, int], int]
    rho: Dict[int, int]
    r: Dict[int, int]
    s: Dict[Tuple[int, int], int]  # (block index, local binary) -> model index
    a: int
    c: Optional[int]
    fast: Dict[Tuple[int, int], int] = field(default_factory=dict)
    fast_caps: Dict[Tuple[int, int], Tuple[float, float]] = field(default_factory=dict)


class Engine:
    """Receding-horizon risk-aware scheduler over one episode."""

    def __init__(
        self,
        model: SystemModel,
        predicates: Dict[str, stl.Predicate],
        config: EngineConfig,
        solver=None,
    ):
        self.config = config
        self.solver = solver if solver is not None else BuiltinSolver()
        self.predicates = dict(predicates)
        names = sorted(self.predicates)
        model_n, preds_n, norm = normalize(model, [self.predicates[nm] for nm in names])
        self.model_orig = model
        self.model = model_n
        self.norm: Normalization = norm
        self.predicates_norm = {nm: p for nm, p in zip(names, preds_n)}
        self.n = model_n.n
        self.m = model_n.m
        self.kappa = float(np.linalg.norm(model_n.K, 2))

        rho_lo = max(radius_for_risk(config.r_ceil, self.n, config.mode), config.eps)
        rho_hi = min(radius_for_risk(config.r_floor, self.n, config.mode), config.M / 2)
        if rho_lo >= rho_hi:
            raise EngineError("risk floor/ceiling leave no admissible radius range")
        self.rho_lo = rho_lo
        self.rho_hi = rho_hi
        self.curve: RiskCurve = build_pwl(
            self.n, rho_lo, rho_hi, config.pwl_segments, config.mode
        )

        N = config.N
        self.k = 0
        self.plan = TubePlan(
            z=np.zeros((N + 1, self.n)),
            v=np.zeros((N, self.m)),
            rho=np.full(N + 1, config.eps),
            r=np.zeros(N + 1),
        )
        self.accepted: List[AcceptedSpec] = []
        self.rejected: List[dict] = []
        self.started = False
        self.last_outcome: Optional[StepOutcome] = None

    # -- problem assembly ---------------------------------------------------

    def build_problem(
        self,
        k: int,
        x_norm: np.ndarray,
        new_enc: Optional[EncodedSpec] = None,
        new_r_max: Optional[float] = None,
    ) -> Tuple[MilpModel, VarMap]:
        cfg = self.config
        N, n, m_in, M = cfg.N, self.n, self.m, cfg.M
        if not 0 <= k <= N - 1:
            raise EngineError(f"step index {k} outside [0, {N - 1}]")
        model = MilpModel()
        A, B = self.model.A, self.model.B

        z = {(i, d): model.add_var(f"z{i}_{d}") for i in range(k, N + 1) for d in range(n)}
        v = {(i, d): model.add_var(f"v{i}_{d}") for i in range(k, N) for d in range(m_in)}
        t = {
            (i, d): model.add_var(f"tv{i}_{d}", lb=0.0)
            for i in range(k, N)
            for d in range(m_in)
        }
        rho = {
            j: model.add_var(f"rho{j}", lb=self.rho_lo, ub=self.rho_hi)
            for j in range(k + 1, N + 1)
        }
        r = {
            j: model.add_var(f"r{j}", lb=cfg.r_floor, ub=cfg.r_ceil)
            for j in range(k + 1, N + 1)
        }
        a_idx = model.add_binary("a")
        c_idx = model.add_binary("c") if new_enc is not None else None

        specs = [acc.enc for acc in self.accepted]
        if new_enc is not None:
            specs = specs + [new_enc]
        joint = conjoin(specs, N)
        s = {}
        for blk, (spec, _off) in enumerate(joint.blocks()):
            for local in range(spec.n_binaries):
                s[(blk, local)] = model.add_binary(f"s{blk}_{local}")

        def s_of(blk: int, local: int) -> int:
            if local == REJECT_KEY:
                return c_idx
            return s[(blk, local)]

        # measurement constraint: z(k) = x + a (z_k - x)
        z_prev = self.plan.z[k]
        for d in range(n):
            model.add_row(
                {z[(k, d)]: 1.0, a_idx: x_norm[d] - z_prev[d]},
                "=",
                x_norm[d],
                name=f"meas_{d}",
            )

        # nominal dynamics
        for i in range(k, N):
            for d in range(n):
                coeffs = {z[(i + 1, d)]: 1.0}
                for e in range(n):
                    if A[d, e] != 0.0:
                        coeffs[z[(i, e)]] = coeffs.get(z[(i, e)], 0.0) - A[d, e]
                for e in range(m_in):
                    if B[d, e] != 0.0:
                        coeffs[v[(i, e)]] = coeffs.get(v[(i, e)], 0.0) - B[d, e]
                model.add_row(coeffs, "=", 0.0, name=f"dyn{i}_{d}")

        # |v| linearization
        for i in range(k, N):
            for d in range(m_in):
                model.add_row({t[(i, d)]: 1.0, v[(i, d)]: -1.0}, ">=", 0.0)
                model.add_row({t[(i, d)]: 1.0, v[(i, d)]: 1.0}, ">=", 0.0)

        # input bounds tightened by the feedback share of the tube
        fast = {}
        fast_caps = {}
        if cfg.input_hi is not None or cfg.input_lo is not None:
            for i in range(k, N):
                rho_var = rho.get(i)
                rho_const = self.plan.rho[i] if rho_var is None else 0.0
                for d in range(m_in):
                    if cfg.input_hi is not None:
                        coeffs = {v[(i, d)]: 1.0}
                        if rho_var is not None:
                            coeffs[rho_var] = self.kappa
                        model.add_row(
                            coeffs, "<=", cfg.input_hi[d] - self.kappa * rho_const,
                            name=f"uhi{i}_{d}",
                        )
                    if cfg.input_lo is not None:
                        coeffs = {v[(i, d)]: -1.0}
                        if rho_var is not None:
                            coeffs[rho_var] = self.kappa
                        model.add_row(
                            coeffs, "<=", -cfg.input_lo[d] - self.kappa * rho_const,
                            name=f"ulo{i}_{d}",
                        )
            if cfg.w_fast > 0 and cfg.input_hi is not None and cfg.input_lo is not None:
                slow = self.kappa * self.rho_hi
                for i in range(k, N):
                    for d in range(m_in):
                        hi_cap = cfg.fast_frac * (cfg.input_hi[d] - slow)
                        lo_cap = cfg.fast_frac * (cfg.input_lo[d] + slow)
                        if hi_cap <= 0 or lo_cap >= 0:
                            continue
                        idx = model.add_var(f"fv{i}_{d}", lb=0.0)
                        fast[(i, d)] = idx
                        fast_caps[(i, d)] = (lo_cap, hi_cap)
                        model.add_row({idx: 1.0, v[(i, d)]: -1.0}, ">=", -hi_cap)
                        model.add_row({idx: 1.0, v[(i, d)]: 1.0}, ">=", lo_cap)

        # constraint blocks
        for blk, (spec, _off) in enumerate(joint.blocks()):
            is_new = new_enc is not None and blk == len(joint.specs) - 1
            eff = relax_for_rejection(spec, REJECT_KEY, M) if is_new else spec
            for ridx, row in enumerate(eff.state_rows):
                i = row.time
                coeffs = {}
                rhs = row.offset
                for local, f in row.fcoef.items():
                    idx = s_of(blk, local)
                    coeffs[idx] = coeffs.get(idx, 0.0) + M * f
                if i < k:
                    rhs -= float(row.g @ self.plan.z[i])
                    if row.use_slack:
                        rhs += self.plan.rho[i]
                else:
                    for d in range(n):
                        if row.g[d] != 0.0:
                            coeffs[z[(i, d)]] = coeffs.get(z[(i, d)], 0.0) + row.g[d]
                    if row.use_slack:
                        if i >= k + 1:
                            coeffs[rho[i]] = coeffs.get(rho[i], 0.0) - 1.0
                        else:
                            rhs += self.plan.rho[i]
                model.add_row(coeffs, ">=", rhs, name=f"spec{blk}_s{ridx}")
            for ridx, row in enumerate(eff.bool_rows):
                coeffs = {}
                for local, cval in row.coeffs.items():
                    idx = s_of(blk, local)
                    coeffs[idx] = coeffs.get(idx, 0.0) + cval
                model.add_row(coeffs, ">=", row.rhs, name=f"spec{blk}_b{ridx}")

        # risk-radius coupling (sound piecewise-linear surrogate)
        for j in range(k + 1, N + 1):
            for seg, (slope, intercept, _iv) in enumerate(self.curve.segments):
                model.add_row(
                    {r[j]: 1.0, rho[j]: -slope}, ">=", intercept, name=f"pwl{j}_{seg}"
                )

        # risk budgets of previously accepted tasks
        for ai, acc in enumerate(self.accepted):
            instants = sorted(acc.enc.horizon - {acc.k_assign})
            const = sum(self.plan.r[j] for j in instants if j <= k)
            coeffs = {r[j]: 1.0 for j in instants if j >= k + 1}
            if coeffs:
                model.add_row(coeffs, "<=", acc.r_max - const, name=f"budget{ai}")
            elif const > acc.r_max + 1e-9:
                raise InternalFault(f"frozen risks already exceed budget of task {ai}")

        if new_enc is not None:
            # rejection ordering and relaxed budget of the new task
            model.add_row({c_idx: 1.0, a_idx: -1.0}, ">=", 0.0, name="reject_ge_meas")
            instants = sorted(new_enc.horizon - {k})
            coeffs = {r[j]: 1.0 for j in instants if j >= k + 1}
            coeffs[c_idx] = -M
            model.add_row(coeffs, "<=", float(new_r_max), name="budget_new")

        objective = {a_idx: M}
        if c_idx is not None:
            objective[c_idx] = M
        for (i, _d), idx in t.items():
            objective[idx] = cfg.w_v * (1.0 + cfg.w_late * (N - i))
        for idx in fast.values():
            objective[idx] = cfg.w_fast
        for j, idx in r.items():
            objective[idx] = cfg.w_r
        for blk, (spec, _off) in enumerate(joint.blocks()):
            for local, when in spec.until_choices:
                idx = s[(blk, local)]
                objective[idx] = objective.get(idx, 0.0) + cfg.w_witness * (
                    when - spec.k
                )
        model.set_objective(objective)
        vm = VarMap(
            z=z, v=v, t=t, rho=rho, r=r, s=s, a=a_idx, c=c_idx,
            fast=fast, fast_caps=fast_caps,
        )
        return model, vm

    # -- fallback (recursive-feasibility certificate) -----------------------

    def fallback_solution(self, model: MilpModel, vm: VarMap, k: int) -> np.ndarray:
        """Prior plan with a=c=1, mapped onto the step-k variable layout."""
        if not self.started:
            raise EngineError("no prior plan exists before the first step")
        x = np.zeros(len(model.variables))
        for (i, d), idx in vm.z.items():
            x[idx] = self.plan.z[i, d]
        for (i, d), idx in vm.v.items():
            x[idx] = self.plan.v[i, d]
        for (i, d), idx in vm.t.items():
            x[idx] = abs(self.plan.v[i, d])
        for (i, d), idx in vm.fast.items():
            lo_cap, hi_cap = vm.fast_caps[(i, d)]
            vv = self.plan.v[i, d]
            x[idx] = max(0.0, vv - hi_cap, lo_cap - vv)
        for j, idx in vm.rho.items():
            x[idx] = self.plan.rho[j]
        for j, idx in vm.r.items():
            x[idx] = self.plan.r[j]
        for blk, acc in enumerate(self.accepted):
            for local in range(acc.enc.n_binaries):
                x[vm.s[(blk, local)]] = acc.last_s[local]
        x[vm.a] = 1.0
        if vm.c is not None:
            x[vm.c] = 1.0
        return x

    # -- stepping -----------------------------------------------------------

    def parse_spec(self, text: str) -> Tuple[stl.Formula, stl.Formula]:
        """Parse task text against original and normalized predicate tables."""
        f_orig = stl.parse(text, self.predicates)
        f_norm = stl.parse(text, self.predicates_norm)
        return f_orig, f_norm

    def _solve(self, model: MilpModel, incumbent: Optional[np.ndarray]) -> MilpSolution:
        cfg = self.config
        sol = self.solver.solve(
            model, node_limit=cfg.node_limit, gap_tol=cfg.gap_tol, incumbent=incumbent
        )
        if sol.status in ("infeasible", "unbounded") or sol.values is None:
            if incumbent is not None and not check_solution(model, incumbent):
                if cfg.cross_check:
                    raise SolverDisagreement(
                        f"solver reported {sol.status} but the fallback plan is feasible"
                    )
                return MilpSolution(
                    "fallback", incumbent, model.objective_value(incumbent)
                )
            return sol
        bad = check_solution(model, sol.values, row_tol=1e-6)
        if bad:
            if incumbent is not None and not check_solution(model, incumbent):
                return MilpSolution(
                    "fallback", incumbent, model.objective_value(incumbent)
                )
            raise InternalFault(f"solver solution violates the model: {bad[:3]}")
        return sol

    def step(self, x, new_spec: Optional[dict] = None) -> StepOutcome:
        """Advance one control period from the measured state (original coords).

        ``new_spec`` is ``{"stl": text, "r_max": float}``; the outcome reports
        whether it was accepted.
        """
        cfg = self.config
        k = self.k
        if k >= cfg.N:
            raise EngineError("episode horizon exhausted")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,):
            raise EngineError(f"state must have shape ({self.n},)")
        x_norm = self.norm.to_normalized(x)
        if not self.started:
            self.plan.z[0] = x_norm
            self.started = True
            incumbent_possible = False
        else:
            incumbent_possible = True

        new_enc = None
        f_orig = f_norm = None
        r_max = None
        if new_spec is not None:
            text = new_spec["stl"]
            r_max = float(new_spec["r_max"])
            if not 0 < r_max <= 1:
                raise EngineError("r_max must lie in (0, 1]")
            f_orig, f_norm = self.parse_spec(text)
            new_enc = encode(f_norm, k, cfg.M, cfg.eps, plan_horizon=cfg.N)

        model, vm = self.build_problem(k, x_norm, new_enc, r_max)
        incumbent = self.fallback_solution(model, vm, k) if incumbent_possible else None
        sol = self._solve(model, incumbent)
        if sol.values is None:
            if k == 0:
                raise ScenarioInfeasible(
                    "the initial scheduling problem is infeasible"
                )
            raise InternalFault(
                f"solver returned {sol.status} at step {k} despite a feasible fallback"
            )

        accepted_flag: Optional[bool] = None
        c_val: Optional[int] = None
        if new_enc is not None:
            c_val = int(round(sol.values[vm.c]))
            accepted_flag = c_val == 0
            if c_val == 1:
                # rejected: re-solve without the block so the applied plan is
                # bit-identical to a run where the task was never posed
                self.rejected.append({"k": k, "stl": new_spec["stl"], "r_max": r_max})
                model, vm = self.build_problem(k, x_norm, None, None)
                incumbent = (
                    self.fallback_solution(model, vm, k) if incumbent_possible else None
                )
                sol = self._solve(model, incumbent)
                if sol.values is None:
                    if k == 0:
                        raise ScenarioInfeasible(
                            "the initial scheduling problem is infeasible"
                        )
                    raise InternalFault("re-solve after rejection failed")
                new_enc = None
                c_val = 1

        xs = sol.values
        a_val = int(round(xs[vm.a]))
        for (i, d), idx in vm.z.items():
            self.plan.z[i, d] = xs[idx]
        for (i, d), idx in vm.v.items():
            self.plan.v[i, d] = xs[idx]
        for j, idx in vm.rho.items():
            self.plan.rho[j] = xs[idx]
        for j, idx in vm.r.items():
            self.plan.r[j] = xs[idx]
        for blk, acc in enumerate(self.accepted):
            acc.last_s = np.array(
                [round(xs[vm.s[(blk, local)]]) for local in range(acc.enc.n_binaries)]
            )
        if new_enc is not None and accepted_flag:
            blk = len(self.accepted)
            bound = float(
                sum(self.plan.r[j] for j in sorted(new_enc.horizon - {k}))
            )
            if bound > r_max + 1e-6:
                raise InternalFault("accepted task bound exceeds its budget")
            self.accepted.append(
                AcceptedSpec(
                    text=new_spec["stl"],
                    formula=f_orig,
                    formula_norm=f_norm,
                    k_assign=k,
                    r_max=r_max,
                    enc=new_enc,
                    bound_at_acceptance=bound,
                    last_s=np.array(
                        [
                            round(xs[vm.s[(blk, local)]])
                            for local in range(new_enc.n_binaries)
                        ]
                    ),
                )
            )

        u = self.plan.v[k] + self.model.K @ (x_norm - self.plan.z[k])
        if cfg.input_hi is not None and np.any(u > cfg.input_hi + 1e-6):
            raise InternalFault(f"applied input {u} exceeds upper bound")
        if cfg.input_lo is not None and np.any(u < cfg.input_lo - 1e-6):
            raise InternalFault(f"applied input {u} violates lower bound")

        self.k = k + 1
        outcome = StepOutcome(
            k=k,
            u=u,
            accepted=accepted_flag,
            a=a_val,
            c=c_val,
            objective=float(sol.objective),
            solver_status=sol.status,
            used_fallback=sol.status == "fallback",
            plan=TubePlan(
                z=self.plan.z.copy(),
                v=self.plan.v.copy(),
                rho=self.plan.rho.copy(),
                r=self.plan.r.copy(),
                a=a_val,
                c=c_val,
            ),
            risk_table=self.risk_table(),
        )
        self.last_outcome = outcome
        return outcome

    # -- reporting ----------------------------------------------------------

    def risk_table(self) -> list:
        table = []
        for acc in self.accepted:
            instants = sorted(acc.enc.horizon - {acc.k_assign})
            if not instants:
                # tasks with no constrained instants (e.g. "true") carry no
                # risk and get no table row
                continue
            # remaining risk only: at every elapsed step the plan is re-anchored
            # to the measured state, so containment at past instants is already
            # verified and their risk is resolved; the live guarantee covers
            # the instants still ahead
            current = float(sum(self.plan.r[j] for j in instants if j >= self.k))
            table.append(
                {
                    "stl": acc.text,
                    "k_assign": acc.k_assign,
                    "r_max": acc.r_max,
                    "bound_at_acceptance": acc.bound_at_acceptance,
                    "current_bound": current,
                }
            )
        return table

    def plan_states_original(self) -> np.ndarray:
        """Nominal plan mapped back to original coordinates, shape (N+1, n)."""
        return (self.norm.T @ self.plan.z.T).T

    def tube_radii_original(self) -> np.ndarray:
        """Worst-axis tube extent per step in original coordinates."""
        scale = float(np.linalg.norm(self.norm.T, 2))
        return self.plan.rho * scale
