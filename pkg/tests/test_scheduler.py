"""Engine behavior: acceptance/rejection, fallback feasibility, budgets,
controller structure and the risk table."""

import numpy as np
import pytest

from stlmpc import stl
from stlmpc.milp import BuiltinSolver, ScipyMilpAdapter, check_solution
from stlmpc.probability import SystemModel
from stlmpc.scheduler import Engine, EngineConfig, EngineError

M_BIG = 1e4


@pytest.fixture
def preds1d(interval1d):
    return {
        "box": interval1d("box", -8.0, 8.0),
        "goal": interval1d("goal", 4.0, 6.0),
        "far": interval1d("far", 100.0, 101.0),
    }


@pytest.fixture
def model1d():
    return SystemModel([[1.0]], [[1.0]], [[-0.5]], "gaussian", [[0.0004]])


def make_engine(model1d, preds1d, N=8, solver=None, **kw):
    cfg = EngineConfig(
        N=N, input_lo=[-2.0], input_hi=[2.0], **kw
    )
    return Engine(model1d, preds1d, cfg, solver=solver or BuiltinSolver())


class TestConfig:
    def test_bad_horizon(self):
        with pytest.raises(EngineError):
            EngineConfig(N=0)

    def test_bad_risk_range(self):
        with pytest.raises(EngineError):
            EngineConfig(N=5, r_floor=0.5, r_ceil=0.1)

    def test_quadratic_mode_rejected(self):
        with pytest.raises(EngineError, match="quadratic"):
            EngineConfig(N=5, mode="quadratic")


class TestStepBasics:
    def test_top_spec_accepted_with_empty_risk_table(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        out = eng.step(np.array([0.0]), {"stl": "true", "r_max": 0.5})
        assert out.accepted is True
        assert out.risk_table == []
        # z(0) = x(0), so the feedback term vanishes and u = v(0)
        assert np.allclose(out.u, eng.plan.v[0], atol=1e-9)

    def test_no_spec_step_runs(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        out = eng.step(np.array([1.0]))
        assert out.accepted is None
        assert out.c is None

    def test_bad_state_shape(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        with pytest.raises(EngineError, match="shape"):
            eng.step(np.array([1.0, 2.0]))

    def test_bad_r_max(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        with pytest.raises(EngineError, match="r_max"):
            eng.step(np.array([0.0]), {"stl": "true", "r_max": 1.5})

    def test_horizon_exhaustion(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d, N=2)
        eng.step(np.array([0.0]))
        eng.step(np.array([0.0]))
        with pytest.raises(EngineError, match="exhausted"):
            eng.step(np.array([0.0]))


class TestAcceptance:
    def test_reachable_goal_accepted(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        out = eng.step(np.array([0.0]), {"stl": "F[3,5] in(goal)", "r_max": 0.5})
        assert out.accepted is True
        table = out.risk_table
        assert len(table) == 1
        assert table[0]["bound_at_acceptance"] <= 0.5
        # immediately after acceptance the live bound equals the recorded one
        assert np.isclose(table[0]["current_bound"], table[0]["bound_at_acceptance"])

    def test_acceptance_requires_measurement_replan(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        out = eng.step(np.array([1.0]), {"stl": "F[2,4] in(goal)", "r_max": 0.5})
        assert out.accepted is True
        assert out.a == 0
        x_norm = eng.norm.to_normalized(np.array([1.0]))
        assert np.allclose(eng.plan.z[0], x_norm, atol=1e-7)

    def test_impossible_task_rejected(self, model1d, preds1d):
        # crossing 100 units in one step under |u| <= 2 is unreachable
        eng = make_engine(model1d, preds1d)
        eng.step(np.array([0.0]))
        plan_before = eng.plan.z.copy()
        out = eng.step(np.array([0.0]), {"stl": "F[1,1] in(far)", "r_max": 0.5})
        assert out.accepted is False
        assert out.c == 1
        assert eng.rejected and eng.rejected[0]["stl"] == "F[1,1] in(far)"
        assert eng.accepted == []

    def test_rejection_neutrality_paired(self, model1d, preds1d):
        # same states in, same inputs out, with and without the doomed task
        runs = []
        for with_task in (False, True):
            eng = make_engine(model1d, preds1d)
            us = []
            x = np.array([0.5])
            for k in range(4):
                spec = None
                if with_task and k == 2:
                    spec = {"stl": "F[1,1] in(far)", "r_max": 0.5}
                out = eng.step(x, spec)
                us.append(out.u.copy())
                x = x + out.u  # deterministic propagation for the pairing
            runs.append(np.array(us))
        assert np.array_equal(runs[0], runs[1])

    def test_contradictory_task_rejected(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d, solver=ScipyMilpAdapter())
        eng.step(np.array([0.0]))
        out = eng.step(
            np.array([0.0]),
            {"stl": "(G[0,3] in(goal)) & (G[0,3] !in(goal))", "r_max": 0.5},
        )
        assert out.accepted is False


class TestFallback:
    def test_fallback_satisfies_next_model(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        x = np.array([0.0])
        out = eng.step(x, {"stl": "G[0,6] in(box)", "r_max": 0.5})
        assert out.accepted
        from stlmpc.encoding import encode

        rng = np.random.default_rng(0)
        for k in range(1, 4):
            x = x + out.u + rng.normal(0, 0.02, size=1)
            x_norm = eng.norm.to_normalized(x)
            cfg = eng.config
            enc = encode(
                stl.parse("F[2,4] in(goal)", eng.predicates_norm),
                k, cfg.M, cfg.eps, plan_horizon=cfg.N,
            )
            model, vm = eng.build_problem(k, x_norm, enc, 0.5)
            fb = eng.fallback_solution(model, vm, k)
            assert check_solution(model, fb) == []
            # a = c = 1 contribute exactly 2M on top of the plan cost
            zeroed = fb.copy()
            zeroed[vm.a] = 0.0
            zeroed[vm.c] = 0.0
            delta = model.objective_value(fb) - model.objective_value(zeroed)
            assert np.isclose(delta, 2 * M_BIG)
            out = eng.step(x)

    def test_node_limit_zero_uses_incumbent(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        out0 = eng.step(np.array([0.0]))
        eng.config.node_limit = 0
        out1 = eng.step(np.array([0.0]) + out0.u)
        assert out1.solver_status in ("node_limit", "fallback")


class TestInvariants:
    def _run(self, eng, specs_at, steps, seed=0):
        rng = np.random.default_rng(seed)
        x = np.array([0.0])
        outs = []
        for k in range(steps):
            out = eng.step(x, specs_at.get(k))
            outs.append((x.copy(), out))
            x = x + out.u + rng.normal(0, 0.015, size=1)
        return outs

    def test_controller_structure_and_bounds(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        outs = self._run(eng, {0: {"stl": "G[0,7] in(box)", "r_max": 0.5}}, 8)
        for x, out in outs:
            x_norm = eng.norm.to_normalized(x)
            u_ref = out.plan.v[out.k] + eng.model.K @ (x_norm - out.plan.z[out.k])
            assert np.allclose(out.u, u_ref, atol=1e-9)
            assert np.all(out.u <= 2.0 + 1e-9) and np.all(out.u >= -2.0 - 1e-9)

    def test_budget_preserved_every_step(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        specs = {
            0: {"stl": "G[0,7] in(box)", "r_max": 0.3},
            2: {"stl": "F[2,4] in(goal)", "r_max": 0.2},
        }
        self._run(eng, specs, 8)
        for acc in eng.accepted:
            instants = sorted(acc.enc.horizon - {acc.k_assign})
            total = sum(eng.plan.r[j] for j in instants)
            assert total <= acc.r_max + 1e-9

    def test_dynamics_residual_on_plan(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        self._run(eng, {0: {"stl": "F[3,5] in(goal)", "r_max": 0.5}}, 5)
        A, B = eng.model.A, eng.model.B
        for i in range(eng.k, eng.config.N):
            resid = eng.plan.z[i + 1] - A @ eng.plan.z[i] - B @ eng.plan.v[i]
            assert np.max(np.abs(resid)) <= 1e-7

    def test_rho_box_and_risk_consistency(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        self._run(eng, {0: {"stl": "G[0,7] in(box)", "r_max": 0.5}}, 4)
        for j in range(eng.k, eng.config.N + 1):
            assert eng.config.eps <= eng.plan.rho[j] <= eng.config.M / 2
            assert eng.plan.r[j] >= 1.0 / eng.plan.rho[j] ** 2 - 1e-9  # n=1

    def test_nominal_plan_satisfies_accepted_specs(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        self._run(
            eng,
            {
                0: {"stl": "G[0,7] in(box)", "r_max": 0.5},
                1: {"stl": "F[2,4] in(goal)", "r_max": 0.5},
            },
            8,
        )
        # re-run and monitor the *plan* after each step
        eng2 = make_engine(model1d, preds1d)
        rng = np.random.default_rng(0)
        x = np.array([0.0])
        specs = {
            0: {"stl": "G[0,7] in(box)", "r_max": 0.5},
            1: {"stl": "F[2,4] in(goal)", "r_max": 0.5},
        }
        for k in range(8):
            out = eng2.step(x, specs.get(k))
            for acc in eng2.accepted:
                assert stl.monitor(acc.formula_norm, eng2.plan.z, acc.k_assign)
            x = x + out.u + rng.normal(0, 0.015, size=1)

    def test_variable_layout_counts(self, casestudy):
        eng = casestudy.make_engine()
        f = stl.parse("G[0,40] (in(S) & !in(O))", eng.predicates_norm)
        from stlmpc.encoding import encode

        enc = encode(f, 0, eng.config.M, eng.config.eps, plan_horizon=40)
        x0 = eng.norm.to_normalized(casestudy.x0)
        eng.plan.z[0] = x0
        model, vm = eng.build_problem(0, x0, enc, 0.5)
        assert len(vm.z) == 2 * 41
        assert len(vm.v) == 2 * 40
        assert len(vm.rho) == 40
        assert len(vm.r) == 40
        assert len(vm.s) == enc.n_binaries
        assert vm.c is not None


class TestRiskTable:
    def test_empty_without_specs(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        assert eng.risk_table() == []

    def test_current_bound_resolves_to_zero(self, model1d, preds1d):
        eng = make_engine(model1d, preds1d)
        rng = np.random.default_rng(1)
        x = np.array([0.0])
        for k in range(8):
            spec = {"stl": "F[2,4] in(goal)", "r_max": 0.5} if k == 0 else None
            out = eng.step(x, spec)
            x = x + out.u + rng.normal(0, 0.015, size=1)
        row = eng.risk_table()[0]
        assert row["current_bound"] == 0.0
        assert row["bound_at_acceptance"] > 0.0

    def test_chi_squared_mode_tighter_bound(self, model1d, preds1d):
        cheb = make_engine(model1d, preds1d)
        chi = make_engine(model1d, preds1d, mode="chi_squared")
        spec = {"stl": "F[3,5] in(goal)", "r_max": 0.5}
        b_cheb = cheb.step(np.array([0.0]), spec).risk_table[0]["bound_at_acceptance"]
        b_chi = chi.step(np.array([0.0]), spec).risk_table[0]["bound_at_acceptance"]
        assert b_chi <= b_cheb + 1e-9
