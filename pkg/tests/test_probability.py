"""Error statistics, normalization and the risk curve, checked against
closed forms, scipy references and Monte Carlo."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_discrete_lyapunov
from scipy.stats import chi2

from stlmpc.probability import (
    GeometryError,
    SystemModel,
    build_pwl,
    normalize,
    point_risk,
    radius_for_risk,
    solve_lyapunov,
    spectral_radius,
    sqrt_spd,
    tube_risk,
)
from stlmpc.stl import Predicate


class TestSystemModel:
    def test_unstable_closed_loop_rejected(self):
        with pytest.raises(GeometryError, match="spectral radius"):
            SystemModel([[1.0]], [[1.0]], [[0.2]], "gaussian", [[1.0]])

    def test_non_spd_covariance_rejected(self):
        with pytest.raises(GeometryError):
            SystemModel([[0.5]], [[1.0]], [[-0.2]], "gaussian", [[-1.0]])

    def test_case_study_dimensions(self, casestudy):
        m = casestudy.model
        assert (m.n, m.m) == (2, 2)
        assert spectral_radius(m.A_K) < 1.0


class TestLyapunov:
    def test_zero_dynamics_fixed_point(self):
        S = solve_lyapunov(np.zeros((2, 2)), np.eye(2))
        assert np.allclose(S, np.eye(2))

    def test_scalar_closed_form(self):
        # S = a^2 S + w  =>  S = w / (1 - a^2)
        a, w = 0.6, 0.5
        S = solve_lyapunov([[a]], [[w]])
        assert np.isclose(S[0, 0], w / (1 - a * a))

    def test_residual_small_random(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            A = rng.uniform(-0.6, 0.6, size=(3, 3))
            W = np.diag(rng.uniform(0.1, 1.0, size=3))
            S = solve_lyapunov(A, W)
            assert np.max(np.abs(A @ S @ A.T + W - S)) <= 1e-10

    def test_matches_scipy_reference(self):
        # [DERIVED] oracle: scipy solves A S A' - S = -W directly
        A = np.array([[0.5, 0.2], [-0.1, 0.7]])
        W = np.array([[0.3, 0.05], [0.05, 0.2]])
        assert np.allclose(solve_lyapunov(A, W), solve_discrete_lyapunov(A, W), atol=1e-9)

    def test_case_study_value(self, casestudy):
        # [DERIVED] A_K = (1-0.618) I, W = 0.002 I => sigma = w/(1-a^2) I
        m = casestudy.model
        S = solve_lyapunov(m.A_K, m.covariance)
        expect = 0.002 / (1 - 0.382**2)
        assert np.allclose(S, expect * np.eye(2), atol=1e-9)


class TestNormalize:
    def test_sqrt_spd_squares_back(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(3, 3))
        S = X @ X.T + 0.1 * np.eye(3)
        T = sqrt_spd(S)
        assert np.allclose(T @ T, S)
        assert np.allclose(T, T.T)

    def test_stationary_covariance_becomes_identity(self):
        model = SystemModel(
            [[0.9, 0.2], [0.0, 0.8]], np.eye(2), -0.5 * np.eye(2),
            "gaussian", [[0.01, 0.002], [0.002, 0.02]],
        )
        model_n, _, norm = normalize(model, [])
        S_n = solve_lyapunov(model_n.A_K, model_n.covariance)
        assert np.allclose(S_n, np.eye(2), atol=1e-9)

    def test_round_trip_coordinates(self, casestudy):
        _, _, norm = normalize(casestudy.model, [])
        x = np.array([3.0, -1.5])
        assert np.allclose(norm.to_original(norm.to_normalized(x)), x)

    def test_predicates_keep_unit_rows_and_membership(self, casestudy):
        preds = list(casestudy.predicates.values())
        _, preds_n, norm = normalize(casestudy.model, preds)
        x = np.array([-5.0, 3.0])
        y = norm.to_normalized(x)
        for p, pn in zip(preds, preds_n):
            assert np.allclose(np.linalg.norm(pn.G, axis=1), 1.0)
            assert p.contains(x) == pn.contains(y)


class TestPointRisk:
    def test_chebyshev_closed_form(self):
        assert np.isclose(point_risk(np.sqrt(200), 2), 0.01)
        assert point_risk(1.0, 2) == 1.0  # clamped

    def test_chi_squared_matches_scipy(self):
        for rho in (1.0, 2.0, 5.0):
            assert np.isclose(point_risk(rho, 2, "chi_squared"), chi2.sf(rho**2, 2))

    def test_radius_inverts_risk(self):
        for n in (1, 2, 3):
            for r in (0.01, 0.1, 0.5):
                assert np.isclose(point_risk(radius_for_risk(r, n), n), r)
                rho = radius_for_risk(r, n, "chi_squared")
                assert np.isclose(point_risk(rho, n, "chi_squared"), r)

    def test_chi_squared_below_chebyshev(self):
        # Gaussian tail beats the distribution-free bound on the usable range
        for n in (1, 2, 3):
            for rho in np.linspace(np.sqrt(n / 1.0), np.sqrt(n / 0.01), 100):
                assert point_risk(rho, n, "chi_squared") <= point_risk(rho, n) + 1e-12

    def test_bad_inputs(self):
        with pytest.raises(GeometryError):
            point_risk(0.0, 2)
        with pytest.raises(GeometryError):
            radius_for_risk(0.0, 2)

    def test_chebyshev_sound_monte_carlo(self):
        # stationary normalized error is N(0, I); containment frequency must
        # beat 1 - n/rho^2 by a wide margin
        rng = np.random.default_rng(11)
        samples = rng.standard_normal((200_000, 2))
        norms2 = np.sum(samples**2, axis=1)
        for r in (0.05, 0.2, 0.5):
            rho = radius_for_risk(r, 2)
            freq_out = np.mean(norms2 >= rho**2)
            assert freq_out <= r


class TestTubeRisk:
    def test_union_bound(self):
        assert np.isclose(tube_risk([0.01] * 40), 0.4)
        assert tube_risk([0.6, 0.7]) == 1.0

    def test_rejects_bad_risk(self):
        with pytest.raises(GeometryError):
            tube_risk([1.5])


class TestPwl:
    def test_sound_on_grid(self):
        # [TRIVIAL-shaped acceptance precheck] surrogate must dominate n/rho^2
        curve = build_pwl(2, np.sqrt(2), np.sqrt(200), 8)
        for rho in np.linspace(curve.rho_lo, curve.rho_hi, 1000):
            assert curve.value(rho) >= point_risk(rho, 2) - 1e-12

    def test_gap_within_002(self):
        curve = build_pwl(2, np.sqrt(2), np.sqrt(200), 8)
        gap = max(
            curve.value(rho) - point_risk(rho, 2)
            for rho in np.linspace(curve.rho_lo, curve.rho_hi, 1000)
        )
        assert gap <= 0.02

    def test_exact_at_knots(self):
        curve = build_pwl(2, 2.0, 10.0, 4)
        for _, _, (lo, hi) in curve.segments:
            for rho in (lo, hi):
                assert np.isclose(curve.value(rho), 2 / rho**2, atol=1e-9)

    def test_chi_squared_mode_sound(self):
        curve = build_pwl(2, np.sqrt(2), np.sqrt(200), 8, "chi_squared")
        for rho in np.linspace(curve.rho_lo, curve.rho_hi, 1000):
            assert curve.value(rho) >= point_risk(rho, 2, "chi_squared") - 1e-9

    def test_rejects_bad_range(self):
        with pytest.raises(GeometryError):
            build_pwl(2, 5.0, 2.0, 4)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 3),
    st.floats(0.02, 0.5),
    st.integers(2, 12),
)
def test_pwl_sound_property(n, r_floor, segments):
    lo = radius_for_risk(1.0, n)
    hi = radius_for_risk(r_floor, n)
    curve = build_pwl(n, lo, hi, segments)
    for rho in np.linspace(lo, hi, 200):
        assert curve.value(rho) >= n / rho**2 - 1e-12
