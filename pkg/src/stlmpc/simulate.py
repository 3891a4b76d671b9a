"""Scenario loading, closed-loop episodes and Monte Carlo evaluation.

A scenario JSON file fixes the plant, noise, predicates, the timed task
events and the solver settings.  An episode runs the engine against sampled
noise, records a step-by-step trace, and afterwards monitors every accepted
task on the realized trajectory.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import stl
from .probability import NOISE_KINDS, RISK_MODES, SystemModel
from .scheduler import Engine, EngineConfig


class ScenarioError(Exception):
    """Scenario file rejected; the message lists every problem found."""


@dataclass
class Event:
    time: int
    stl: str
    r_max: float


@dataclass
class Scenario:
    model: SystemModel
    predicates: Dict[str, stl.Predicate]
    horizon: int
    x0: np.ndarray
    events: List[Event]
    config: EngineConfig
    name: str = "scenario"

    def make_engine(self, solver=None) -> Engine:
        return Engine(self.model, self.predicates, self.config, solver=solver)


def _matrix(obj, what: str, errors: List[str]) -> Optional[np.ndarray]:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{what}: not a numeric array")
        return None
    if not np.all(np.isfinite(arr)):
        errors.append(f"{what}: contains non-finite entries")
        return None
    return arr


def load_scenario(source) -> Scenario:
    """Parse and validate a scenario from a path, file object or dict."""
    if isinstance(source, dict):
        data = source
        name = data.get("name", "scenario")
    elif hasattr(source, "read"):
        data = json.load(source)
        name = data.get("name", "scenario")
    else:
        path = Path(source)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ScenarioError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path} is not valid JSON: {exc}") from exc
        name = data.get("name", path.stem)

    errors: List[str] = []
    for key in ("system", "horizon", "x0", "predicates", "events"):
        if key not in data:
            errors.append(f"missing required key {key!r}")
    if errors:
        raise ScenarioError("; ".join(errors))

    sysd = data["system"]
    A = _matrix(sysd.get("A"), "system.A", errors)
    B = _matrix(sysd.get("B"), "system.B", errors)
    K = _matrix(sysd.get("K"), "system.K", errors)
    noise = data.get("noise", {"kind": "none"})
    kind = noise.get("kind", "gaussian")
    if kind not in NOISE_KINDS:
        errors.append(f"noise.kind must be one of {NOISE_KINDS}, got {kind!r}")
    cov = None
    if kind != "none":
        cov = _matrix(noise.get("covariance"), "noise.covariance", errors)

    horizon = data["horizon"]
    if not isinstance(horizon, int) or horizon < 1:
        errors.append("horizon must be a positive integer")
    x0 = _matrix(data["x0"], "x0", errors)

    predicates: Dict[str, stl.Predicate] = {}
    for pname, pd in data.get("predicates", {}).items():
        G = _matrix(pd.get("G"), f"predicates.{pname}.G", errors)
        b = _matrix(pd.get("b"), f"predicates.{pname}.b", errors)
        if G is None or b is None:
            continue
        try:
            predicates[pname] = stl.Predicate.normalized(
                np.atleast_2d(G), np.atleast_1d(b), name=pname
            )
        except stl.StlError as exc:
            errors.append(f"predicates.{pname}: {exc}")

    model = None
    if A is not None and B is not None and K is not None:
        try:
            model = SystemModel(A, B, K, kind if kind in NOISE_KINDS else "none", cov)
        except Exception as exc:  # GeometryError and shape issues
            errors.append(f"system: {exc}")

    events: List[Event] = []
    for i, ev in enumerate(data.get("events", [])):
        where = f"events[{i}]"
        if not isinstance(ev, dict):
            errors.append(f"{where}: must be an object")
            continue
        t = ev.get("time")
        text = ev.get("stl")
        r_max = ev.get("r_max")
        if not isinstance(t, int) or t < 0:
            errors.append(f"{where}.time must be a nonnegative integer")
            continue
        if isinstance(horizon, int) and t >= horizon:
            errors.append(f"{where}.time {t} is at or past the horizon {horizon}")
            continue
        if not isinstance(text, str):
            errors.append(f"{where}.stl must be a string")
            continue
        if not isinstance(r_max, (int, float)) or not 0 < r_max <= 1:
            errors.append(f"{where}.r_max must lie in (0, 1]")
            continue
        if predicates and model is not None:
            try:
                f = stl.parse(text, predicates)
            except stl.StlError as exc:
                errors.append(f"{where}.stl: {exc}")
                continue
            hz = stl.active_horizon(f, t)
            if hz and isinstance(horizon, int) and max(hz) > horizon:
                errors.append(
                    f"{where}: task needs time {max(hz)} beyond horizon {horizon}"
                )
                continue
        events.append(Event(int(t), text, float(r_max)))
    events.sort(key=lambda e: e.time)
    seen_times = [e.time for e in events]
    if len(set(seen_times)) != len(seen_times):
        errors.append("at most one event per time step is supported")

    sd = data.get("solver", {})
    cd = data.get("cost", {})
    ib = data.get("input_bounds")
    lo = hi = None
    if ib is not None:
        lo = _matrix(ib.get("lo"), "input_bounds.lo", errors)
        hi = _matrix(ib.get("hi"), "input_bounds.hi", errors)
    mode = sd.get("mode", "chebyshev")
    if mode not in RISK_MODES:
        errors.append(f"solver.mode must be one of {RISK_MODES}, got {mode!r}")

    if errors:
        raise ScenarioError("; ".join(errors))

    config = EngineConfig(
        N=horizon,
        M=float(sd.get("M", 1e4)),
        eps=float(sd.get("eps", 1e-3)),
        r_floor=float(sd.get("r_floor", 0.01)),
        r_ceil=float(sd.get("r_ceil", 1.0)),
        pwl_segments=int(sd.get("pwl_segments", 8)),
        mode=mode,
        w_v=float(cd.get("w_v", 1e-3)),
        w_r=float(cd.get("w_r", 1.0)),
        input_lo=lo,
        input_hi=hi,
    )
    if model is not None and x0 is not None and x0.shape != (model.n,):
        raise ScenarioError(f"x0 must have shape ({model.n},), got {x0.shape}")
    return Scenario(model, predicates, horizon, x0, events, config, name)


def sample_noise(model: SystemModel, rng: np.random.Generator) -> np.ndarray:
    """One disturbance sample with the scenario's kind and covariance."""
    n = model.n
    if model.noise_kind == "none":
        return np.zeros(n)
    L = np.linalg.cholesky(model.covariance)
    if model.noise_kind == "gaussian":
        return L @ rng.standard_normal(n)
    # uniform in a ball scaled so the covariance matches the requested one
    direction = rng.standard_normal(n)
    direction /= np.linalg.norm(direction)
    radius = np.sqrt(n + 2) * rng.uniform() ** (1.0 / n)
    return L @ (radius * direction)


@dataclass
class EpisodeTrace:
    seed: int
    states: np.ndarray  # (N+1, n)
    inputs: np.ndarray  # (N, m)
    steps: List[dict] = field(default_factory=list)
    accepted: List[dict] = field(default_factory=list)
    rejected: List[dict] = field(default_factory=list)
    satisfied: Dict[str, bool] = field(default_factory=dict)
    risk_table: List[dict] = field(default_factory=list)

    @property
    def any_violation(self) -> bool:
        return any(not ok for ok in self.satisfied.values())

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "type": "meta",
                    "seed": self.seed,
                    "steps": len(self.inputs),
                }
            )
        ]
        for rec in self.steps:
            lines.append(json.dumps({"type": "step", **rec}))
        # terminal record: one step line per state, N+1 in total
        lines.append(
            json.dumps(
                {
                    "type": "step",
                    "k": len(self.inputs),
                    "x": [float(v) for v in self.states[-1]],
                }
            )
        )
        lines.append(
            json.dumps(
                {
                    "type": "summary",
                    "accepted": self.accepted,
                    "rejected": self.rejected,
                    "satisfied": self.satisfied,
                    "risk_table": self.risk_table,
                }
            )
        )
        return "\n".join(lines) + "\n"

    def write_jsonl(self, destination):
        text = self.to_jsonl()
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            Path(destination).write_text(text)


def run_episode(
    scenario: Scenario,
    seed: int = 0,
    solver=None,
    on_step=None,
) -> EpisodeTrace:
    """One closed-loop run; monitoring of accepted tasks happens at the end."""
    rng = np.random.default_rng(seed)
    engine = scenario.make_engine(solver=solver)
    N = scenario.horizon
    n, m = scenario.model.n, scenario.model.m
    states = np.zeros((N + 1, n))
    inputs = np.zeros((N, m))
    states[0] = scenario.x0
    events_at = {e.time: e for e in scenario.events}
    trace = EpisodeTrace(seed=seed, states=states, inputs=inputs)

    x = scenario.x0.copy()
    for k in range(N):
        ev = events_at.get(k)
        new_spec = {"stl": ev.stl, "r_max": ev.r_max} if ev else None
        outcome = engine.step(x, new_spec)
        inputs[k] = outcome.u
        rec = {
            "k": k,
            "x": [float(v) for v in x],
            "u": [float(v) for v in outcome.u],
            "a": outcome.a,
        }
        if ev:
            rec["event"] = {"stl": ev.stl, "r_max": ev.r_max}
            rec["accepted"] = bool(outcome.accepted)
        trace.steps.append(rec)
        if on_step:
            on_step(engine, outcome)
        w = sample_noise(scenario.model, rng)
        x = scenario.model.A @ x + scenario.model.B @ outcome.u + w
        states[k + 1] = x

    for acc in engine.accepted:
        label = f"k{acc.k_assign}: {acc.text}"
        trace.accepted.append(
            {"k": acc.k_assign, "stl": acc.text, "r_max": acc.r_max}
        )
        trace.satisfied[label] = bool(
            stl.monitor(acc.formula, states, acc.k_assign)
        )
    trace.rejected = [dict(r) for r in engine.rejected]
    trace.risk_table = engine.risk_table()
    return trace


def monte_carlo(
    scenario: Scenario,
    episodes: int,
    seed_base: int = 0,
    solver=None,
) -> dict:
    """Empirical violation rates of every accepted task across episodes.

    Per task, the reported ``bound`` is the scheduler's risk bound recorded
    at acceptance time in the corresponding episode (worst case over
    episodes, since acceptance-time plans differ with the noise)."""
    t0 = time.time()
    per_spec: Dict[str, dict] = {}
    failures = 0
    for ep in range(episodes):
        trace = run_episode(scenario, seed=seed_base + ep, solver=solver)
        if trace.any_violation:
            failures += 1
        bounds = {
            f"k{row['k_assign']}: {row['stl']}": row for row in trace.risk_table
        }
        for label, ok in trace.satisfied.items():
            slot = per_spec.setdefault(
                label, {"episodes": 0, "violations": 0, "bound": 0.0}
            )
            slot["episodes"] += 1
            slot["violations"] += 0 if ok else 1
            if label in bounds:
                slot["bound"] = max(
                    slot["bound"], float(bounds[label]["bound_at_acceptance"])
                )
    report = {
        "episodes": episodes,
        "seed_base": seed_base,
        "elapsed_s": time.time() - t0,
        "episodes_with_violation": failures,
        "per_spec": [],
    }
    for label, slot in sorted(per_spec.items()):
        n_ep = max(1, slot["episodes"])
        freq = (slot["episodes"] - slot["violations"]) / n_ep
        guaranteed = 1.0 - slot["bound"]
        sigma = float(np.sqrt(max(freq * (1.0 - freq), 1.0 / n_ep) / n_ep))
        report["per_spec"].append(
            {
                "spec": label,
                "episodes": slot["episodes"],
                "violations": slot["violations"],
                "frequency": freq,
                "bound": slot["bound"],
                "guaranteed": guaranteed,
                "sigma": sigma,
                "flagged": bool(freq + 3.0 * sigma < guaranteed),
            }
        )
    return report
