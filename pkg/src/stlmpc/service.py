"""HTTP front end: one live engine session behind a small JSON API.

The server owns a single closed-loop session over one scenario.  Operators
poll GET /api/state, queue tasks with POST /api/spec (consumed at the next
step boundary, mirroring the scheduling loop), and drive time forward with
POST /api/advance.  A single lock funnels every mutation, so concurrent
clients can never interleave engine steps.
"""

from __future__ import annotations

import threading
from typing import List, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import stl
from .scheduler import EngineError
from .simulate import Scenario, sample_noise


class SpecBody(BaseModel):
    stl: str
    r_max: float


class AdvanceBody(BaseModel):
    steps: int = Field(default=1, ge=1)


class ResetBody(BaseModel):
    seed: int = 0


class Session:
    """Single-engine session: engine, noise stream, trace, queued task."""

    def __init__(self, scenario: Scenario, seed: int = 0, solver=None):
        self.scenario = scenario
        self.solver = solver
        self.lock = threading.Lock()
        self.reset(seed)

    def reset(self, seed: int):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.engine = self.scenario.make_engine(solver=self.solver)
        self.x = self.scenario.x0.copy()
        self.states: List[list] = [[float(v) for v in self.x]]
        self.steps: List[dict] = []
        self.pending: Optional[dict] = None
        self.outcomes: List[dict] = []

    @property
    def time(self) -> int:
        return self.engine.k

    def advance(self, steps: int) -> List[dict]:
        new_outcomes: List[dict] = []
        for _ in range(steps):
            spec = self.pending
            self.pending = None
            outcome = self.engine.step(self.x, spec)
            rec = {
                "k": outcome.k,
                "x": [float(v) for v in self.x],
                "u": [float(v) for v in outcome.u],
                "a": outcome.a,
            }
            if spec is not None:
                table = self.engine.risk_table()
                bound = next(
                    (
                        row["bound_at_acceptance"]
                        for row in table
                        if row["k_assign"] == outcome.k
                    ),
                    0.0,
                )
                result = {
                    "k": outcome.k,
                    "stl": spec["stl"],
                    "r_max": spec["r_max"],
                    "accepted": bool(outcome.accepted),
                    "bound": bound if outcome.accepted else None,
                }
                rec["event"] = {"stl": spec["stl"], "r_max": spec["r_max"]}
                rec["accepted"] = bool(outcome.accepted)
                new_outcomes.append(result)
                self.outcomes.append(result)
            self.steps.append(rec)
            w = sample_noise(self.scenario.model, self.rng)
            m = self.scenario.model
            self.x = m.A @ self.x + m.B @ outcome.u + w
            self.states.append([float(v) for v in self.x])
        return new_outcomes

    def state_snapshot(self) -> dict:
        eng = self.engine
        return {
            "name": self.scenario.name,
            "time": eng.k,
            "horizon": self.scenario.horizon,
            "seed": self.seed,
            "x": [float(v) for v in self.x],
            "plan": [[float(v) for v in row] for row in eng.plan_states_original()],
            "tube_radii": [float(v) for v in eng.tube_radii_original()],
            "pending_spec": self.pending,
            "accepted": [
                {"k": a.k_assign, "stl": a.text, "r_max": a.r_max}
                for a in eng.accepted
            ],
            "rejected": [dict(r) for r in eng.rejected],
            "predicates": {
                name: {
                    "G": [[float(v) for v in row] for row in p.G],
                    "b": [float(v) for v in p.b],
                }
                for name, p in eng.predicates.items()
            },
        }


def create_app(scenario: Scenario, seed: int = 0, solver=None) -> FastAPI:
    app = FastAPI(title="stlmpc", docs_url=None, redoc_url=None)
    session = Session(scenario, seed=seed, solver=solver)
    app.state.session = session

    @app.get("/api/state")
    def get_state():
        with session.lock:
            return session.state_snapshot()

    @app.get("/api/risks")
    def get_risks():
        with session.lock:
            return session.engine.risk_table()

    @app.get("/api/trace")
    def get_trace():
        with session.lock:
            return {
                "seed": session.seed,
                "states": session.states,
                "steps": session.steps,
                "outcomes": session.outcomes,
                "risk_table": session.engine.risk_table(),
            }

    @app.post("/api/advance")
    def post_advance(body: AdvanceBody):
        with session.lock:
            if session.time + body.steps > session.scenario.horizon:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"cannot advance {body.steps} step(s): time is "
                        f"{session.time} of horizon {session.scenario.horizon}"
                    ),
                )
            try:
                outcomes = session.advance(body.steps)
            except EngineError as exc:
                raise HTTPException(status_code=500, detail=str(exc)) from exc
            return {
                "time": session.time,
                "outcomes": outcomes,
                "risk_table": session.engine.risk_table(),
            }

    @app.post("/api/spec")
    def post_spec(body: SpecBody):
        with session.lock:
            if not 0 < body.r_max <= 1:
                raise HTTPException(
                    status_code=422, detail="r_max must lie in (0, 1]"
                )
            if session.time >= session.scenario.horizon:
                raise HTTPException(
                    status_code=409, detail="episode horizon already exhausted"
                )
            try:
                f = stl.parse(body.stl, session.engine.predicates)
            except stl.StlError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            hz = stl.active_horizon(f, session.time)
            if hz and max(hz) > session.scenario.horizon:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"task needs time {max(hz)} beyond the horizon "
                        f"{session.scenario.horizon}"
                    ),
                )
            if session.pending is not None:
                raise HTTPException(
                    status_code=409, detail="a task is already queued for the next step"
                )
            session.pending = {"stl": body.stl, "r_max": body.r_max}
            return {"queued": True, "at_time": session.time}

    @app.post("/api/reset")
    def post_reset(body: ResetBody):
        with session.lock:
            session.reset(body.seed)
            return {"time": 0, "seed": body.seed}

    return app
