"""HTTP API behavior, equivalence with direct engine runs, and the CLI."""

import json

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from stlmpc.cli import main as cli_main
from stlmpc.milp import ScipyMilpAdapter
from stlmpc.service import create_app
from stlmpc.simulate import load_scenario, run_episode

from test_sim import scenario_dict


@pytest.fixture
def client():
    sc = load_scenario(scenario_dict())
    app = create_app(sc, seed=0, solver=ScipyMilpAdapter())
    with TestClient(app) as c:
        yield c


class TestStateAndAdvance:
    def test_initial_state_snapshot(self, client):
        body = client.get("/api/state").json()
        assert body["time"] == 0
        assert body["horizon"] == 8
        assert body["x"] == [0.0]
        assert len(body["plan"]) == 9
        assert len(body["tube_radii"]) == 9
        assert body["pending_spec"] is None
        assert body["accepted"] == [] and body["rejected"] == []
        assert set(body["predicates"]) == {"box", "goal"}

    def test_advance_moves_time(self, client):
        r = client.post("/api/advance", json={"steps": 3})
        assert r.status_code == 200
        assert r.json()["time"] == 3
        assert client.get("/api/state").json()["time"] == 3

    def test_advance_past_horizon_409(self, client):
        assert client.post("/api/advance", json={"steps": 9}).status_code == 409
        client.post("/api/advance", json={"steps": 8})
        assert client.post("/api/advance", json={"steps": 1}).status_code == 409

    def test_advance_validates_steps(self, client):
        assert client.post("/api/advance", json={"steps": 0}).status_code == 422

    def test_trace_accumulates(self, client):
        client.post("/api/advance", json={"steps": 2})
        body = client.get("/api/trace").json()
        assert len(body["states"]) == 3
        assert [s["k"] for s in body["steps"]] == [0, 1]


class TestSpecQueue:
    def test_queue_and_consume(self, client):
        r = client.post("/api/spec", json={"stl": "F[3,5] in(goal)", "r_max": 0.5})
        assert r.status_code == 200
        assert r.json() == {"queued": True, "at_time": 0}
        assert client.get("/api/state").json()["pending_spec"] == {
            "stl": "F[3,5] in(goal)",
            "r_max": 0.5,
        }
        adv = client.post("/api/advance", json={"steps": 1}).json()
        assert adv["outcomes"] == [
            {
                "k": 0,
                "stl": "F[3,5] in(goal)",
                "r_max": 0.5,
                "accepted": True,
                "bound": adv["risk_table"][0]["bound_at_acceptance"],
            }
        ]
        state = client.get("/api/state").json()
        assert state["pending_spec"] is None
        assert state["accepted"] == [{"k": 0, "stl": "F[3,5] in(goal)", "r_max": 0.5}]

    def test_top_spec_has_zero_bound(self, client):
        client.post("/api/spec", json={"stl": "true", "r_max": 0.5})
        adv = client.post("/api/advance", json={"steps": 1}).json()
        assert adv["outcomes"][0]["accepted"] is True
        assert adv["outcomes"][0]["bound"] == 0.0
        assert client.get("/api/risks").json() == []

    def test_parse_error_400_with_position(self, client):
        r = client.post("/api/spec", json={"stl": "F[3,5 in(goal)", "r_max": 0.5})
        assert r.status_code == 400
        assert "position" in r.json()["detail"]

    def test_unknown_predicate_400(self, client):
        r = client.post("/api/spec", json={"stl": "in(nowhere)", "r_max": 0.5})
        assert r.status_code == 400

    def test_bad_r_max_422(self, client):
        r = client.post("/api/spec", json={"stl": "true", "r_max": 1.5})
        assert r.status_code == 422

    def test_beyond_horizon_409(self, client):
        r = client.post("/api/spec", json={"stl": "F[7,9] in(goal)", "r_max": 0.5})
        assert r.status_code == 409
        assert "beyond the horizon" in r.json()["detail"]

    def test_double_queue_409(self, client):
        client.post("/api/spec", json={"stl": "true", "r_max": 0.5})
        r = client.post("/api/spec", json={"stl": "true", "r_max": 0.5})
        assert r.status_code == 409
        assert "already queued" in r.json()["detail"]

    def test_exhausted_horizon_409(self, client):
        client.post("/api/advance", json={"steps": 8})
        r = client.post("/api/spec", json={"stl": "true", "r_max": 0.5})
        assert r.status_code == 409
        assert "exhausted" in r.json()["detail"]

    def test_rejection_reported(self, client):
        # the narrow goal cannot be reached next step from the far corner
        client.post("/api/spec", json={"stl": "G[1,1] in(goal)", "r_max": 0.5})
        adv = client.post("/api/advance", json={"steps": 1}).json()
        assert adv["outcomes"][0]["accepted"] is False
        assert adv["outcomes"][0]["bound"] is None
        assert client.get("/api/state").json()["rejected"][0]["stl"] == "G[1,1] in(goal)"


class TestReset:
    def test_reset_restores_and_reseeds(self, client):
        client.post("/api/spec", json={"stl": "F[3,5] in(goal)", "r_max": 0.5})
        client.post("/api/advance", json={"steps": 4})
        first = client.get("/api/trace").json()
        r = client.post("/api/reset", json={"seed": 0})
        assert r.json() == {"time": 0, "seed": 0}
        assert client.get("/api/state").json()["time"] == 0
        client.post("/api/spec", json={"stl": "F[3,5] in(goal)", "r_max": 0.5})
        client.post("/api/advance", json={"steps": 4})
        assert client.get("/api/trace").json() == first


class TestApiMatchesDirectRun:
    def test_states_and_risks_byte_equal(self):
        sc = load_scenario(scenario_dict())
        app = create_app(sc, seed=5, solver=ScipyMilpAdapter())
        with TestClient(app) as client:
            for ev in sc.events:
                assert ev.time == 0
                client.post("/api/spec", json={"stl": ev.stl, "r_max": ev.r_max})
            client.post("/api/advance", json={"steps": sc.horizon})
            api = client.get("/api/trace").json()
        direct = run_episode(sc, seed=5, solver=ScipyMilpAdapter())
        assert np.array_equal(np.array(api["states"]), direct.states)
        assert api["risk_table"] == direct.risk_table


class TestCli:
    def test_run_deterministic_byte_identical(self, tmp_path):
        p = tmp_path / "sc.json"
        p.write_text(json.dumps(scenario_dict()))
        runner = CliRunner()
        args = ["run", "--scenario", str(p), "--seed", "2", "--solver", "scipy"]
        a = runner.invoke(cli_main, args)
        b = runner.invoke(cli_main, args)
        assert a.exit_code == 0
        assert a.output == b.output
        lines = [json.loads(l) for l in a.output.splitlines()]
        assert lines[0]["type"] == "meta"
        assert lines[-1]["type"] == "summary"

    def test_run_matches_library(self, tmp_path):
        p = tmp_path / "sc.json"
        p.write_text(json.dumps(scenario_dict()))
        runner = CliRunner()
        res = runner.invoke(
            cli_main, ["run", "--scenario", str(p), "--seed", "2", "--solver", "scipy"]
        )
        direct = run_episode(load_scenario(p), seed=2, solver=ScipyMilpAdapter())
        assert res.output == direct.to_jsonl()

    def test_missing_scenario_exit_2(self):
        res = CliRunner().invoke(cli_main, ["run", "--scenario", "/nope.json"])
        assert res.exit_code == 2
        assert "scenario error" in res.output

    def test_invalid_scenario_exit_2(self, tmp_path):
        p = tmp_path / "sc.json"
        p.write_text(json.dumps({"name": "broken"}))
        res = CliRunner().invoke(cli_main, ["run", "--scenario", str(p)])
        assert res.exit_code == 2

    def test_mc_zero_episodes_usage_error(self, tmp_path):
        p = tmp_path / "sc.json"
        p.write_text(json.dumps(scenario_dict()))
        res = CliRunner().invoke(
            cli_main, ["mc", "--scenario", str(p), "--episodes", "0"]
        )
        assert res.exit_code == 2
        assert "at least 1" in res.output

    def test_mc_report(self, tmp_path):
        p = tmp_path / "sc.json"
        p.write_text(json.dumps(scenario_dict()))
        res = CliRunner().invoke(
            cli_main,
            ["mc", "--scenario", str(p), "--episodes", "3", "--solver", "scipy"],
        )
        assert res.exit_code == 0
        report = json.loads(res.output)
        assert report["episodes"] == 3
        assert report["per_spec"][0]["episodes"] == 3

    def test_unknown_solver_usage_error(self, tmp_path):
        p = tmp_path / "sc.json"
        p.write_text(json.dumps(scenario_dict()))
        res = CliRunner().invoke(
            cli_main, ["run", "--scenario", str(p), "--solver", "gurobi"]
        )
        assert res.exit_code == 2

    def test_export_lp_round_trips(self, tmp_path):
        from stlmpc.milp import import_lp

        p = tmp_path / "sc.json"
        p.write_text(json.dumps(scenario_dict()))
        res = CliRunner().invoke(cli_main, ["export-lp", "--scenario", str(p)])
        assert res.exit_code == 0
        model = import_lp(res.output)
        # step-0 model including the time-0 task: measurement-use and
        # rejection binaries plus the task block binaries are present
        names = {v.name for v in model.variables}
        assert {"a", "c"} <= names
