"""Error-dynamics statistics and risk calibration.

The closed-loop error ``e(k+1) = A_K e(k) + w(k)`` has a stationary
covariance solving the discrete Lyapunov equation.  After the coordinate
change ``y = Sigma_inf^{-1/2} x`` the stationary covariance is the identity
and every reachable set of probability level p is a sphere, so a single
radius-to-risk curve calibrates the whole tube.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import chi2

NOISE_KINDS = ("gaussian", "uniform_ball", "none")
RISK_MODES = ("chebyshev", "chi_squared")


class GeometryError(Exception):
    pass


@dataclass
class SystemModel:
    """Linear system x+ = Ax + Bu + w with stabilizing error feedback K."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    noise_kind: str = "gaussian"
    covariance: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise GeometryError("A must be square")
        if self.B.shape[0] != n:
            raise GeometryError("B row count must match A")
        m = self.B.shape[1]
        if self.K.shape != (m, n):
            raise GeometryError(f"K must be {m}x{n}")
        if self.noise_kind not in NOISE_KINDS:
            raise GeometryError(f"unknown noise kind {self.noise_kind!r}")
        if self.covariance is None:
            self.covariance = np.eye(n)
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if self.covariance.shape != (n, n):
            raise GeometryError("covariance must be n x n")
        if self.noise_kind != "none":
            _check_spd(self.covariance, "noise covariance")
        rad = spectral_radius(self.A_K)
        if rad >= 1.0:
            raise GeometryError(f"A + BK has spectral radius {rad:.4f} >= 1")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def A_K(self) -> np.ndarray:
        return self.A + self.B @ self.K


@dataclass
class Normalization:
    """Coordinate map y = T^{-1} x with T the symmetric root of Sigma_inf."""

    sigma_inf: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray

    def to_normalized(self, x: np.ndarray) -> np.ndarray:
        return self.T_inv @ np.asarray(x, dtype=float)

    def to_original(self, y: np.ndarray) -> np.ndarray:
        return self.T @ np.asarray(y, dtype=float)


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _check_spd(S: np.ndarray, what: str):
    if not np.allclose(S, S.T, atol=1e-9):
        raise GeometryError(f"{what} is not symmetric")
    if np.min(np.linalg.eigvalsh((S + S.T) / 2)) <= 0:
        raise GeometryError(f"{what} is not positive definite")


def solve_lyapunov(
    A_K: np.ndarray,
    W: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10**6,
) -> np.ndarray:
    """Fixed point of  S = A_K S A_K' + W  for a stable A_K."""
    A_K = np.atleast_2d(np.asarray(A_K, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    _check_spd(W, "W")
    S = W.copy()
    for _ in range(max_iter):
        S_next = A_K @ S @ A_K.T + W
        if np.max(np.abs(S_next - S)) <= tol:
            return (S_next + S_next.T) / 2
        S = S_next
    raise GeometryError("Lyapunov iteration did not converge; is A_K stable?")


def sqrt_spd(S: np.ndarray) -> np.ndarray:
    """Symmetric positive square root T with T @ T = S."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    _check_spd(S, "matrix")
    vals, vecs = np.linalg.eigh((S + S.T) / 2)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def normalize(model: SystemModel, predicates: Sequence) -> Tuple[SystemModel, list, Normalization]:
    """Transform dynamics and predicates so the stationary error covariance is I.

    Returns the normalized model, transformed predicates (unit rows preserved)
    and the transform handle.  Inputs keep their original units; only state
    coordinates change.
    """
    from .stl import Predicate

    if model.noise_kind == "none":
        # deterministic mode: no error statistics, identity transform
        sigma = np.eye(model.n)
    else:
        sigma = solve_lyapunov(model.A_K, model.covariance)
    T = sqrt_spd(sigma)
    T_inv = np.linalg.inv(T)
    norm = Normalization(sigma_inf=sigma, T=T, T_inv=T_inv)

    A_n = T_inv @ model.A @ T
    B_n = T_inv @ model.B
    K_n = model.K @ T
    cov_n = T_inv @ model.covariance @ T_inv.T
    model_n = SystemModel(A_n, B_n, K_n, model.noise_kind, (cov_n + cov_n.T) / 2)

    preds_n = []
    for p in predicates:
        G = p.G @ T
        preds_n.append(Predicate.normalized(G, p.b, name=p.name))
    return model_n, preds_n, norm


# ---------------------------------------------------------------------------
# radius <-> risk


def point_risk(rho: float, n: int, mode: str = "chebyshev") -> float:
    """Risk that the stationary normalized error leaves the radius-rho ball."""
    if rho <= 0:
        raise GeometryError("radius must be positive")
    if mode == "chebyshev":
        return float(min(1.0, n / rho**2))
    if mode == "chi_squared":
        return float(min(1.0, chi2.sf(rho**2, df=n)))
    raise GeometryError(f"unknown risk mode {mode!r}")


def radius_for_risk(r: float, n: int, mode: str = "chebyshev") -> float:
    """Smallest radius whose point risk does not exceed ``r``."""
    if not 0 < r <= 1:
        raise GeometryError("risk must lie in (0, 1]")
    if mode == "chebyshev":
        return float(np.sqrt(n / r))
    if mode == "chi_squared":
        return float(np.sqrt(chi2.isf(r, df=n))) if r < 1 else 0.0
    raise GeometryError(f"unknown risk mode {mode!r}")


def tube_risk(risks: Sequence[float]) -> float:
    """Union-bound risk that any step of the tube misses its set."""
    risks = list(risks)
    for r in risks:
        if not 0 <= r <= 1:
            raise GeometryError("per-step risks must lie in [0, 1]")
    return float(min(1.0, sum(risks)))


@dataclass
class RiskCurve:
    """Sound piecewise-linear upper bound of the radius-to-risk map.

    Each segment is a chord of the true curve; the pointwise max of all
    chords dominates the curve on [rho_lo, rho_hi].
    """

    mode: str
    n: int
    rho_lo: float
    rho_hi: float
    segments: List[Tuple[float, float, Tuple[float, float]]] = field(default_factory=list)

    def value(self, rho: float) -> float:
        return max(m * rho + c for m, c, _ in self.segments)


def build_pwl(
    n: int,
    rho_lo: float,
    rho_hi: float,
    segments: int,
    mode: str = "chebyshev",
) -> RiskCurve:
    """Chord over-approximation of the point-risk curve.

    Knots are uniform in 1/rho, which roughly equalizes the chord gap for the
    n/rho^2 curve.  For the chi-squared mode, chords are lifted by the worst
    grid deficit so dominance holds even off the convex range.
    """
    if not (0 < rho_lo < rho_hi):
        raise GeometryError("need 0 < rho_lo < rho_hi")
    if segments < 1:
        raise GeometryError("need at least one segment")
    inv = np.linspace(1.0 / rho_lo, 1.0 / rho_hi, segments + 1)
    knots = 1.0 / inv
    if mode == "chebyshev":
        raw = lambda rho: n / rho**2  # unclamped: dominates the clamped risk
    else:
        raw = lambda rho: point_risk(rho, n, mode)
    segs = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        f_lo = raw(lo)
        f_hi = raw(hi)
        slope = (f_hi - f_lo) / (hi - lo)
        intercept = f_lo - slope * lo
        segs.append((slope, intercept, (float(lo), float(hi))))
    curve = RiskCurve(mode=mode, n=n, rho_lo=rho_lo, rho_hi=rho_hi, segments=segs)
    if mode != "chebyshev":
        grid = np.linspace(rho_lo, rho_hi, 2048)
        deficit = max(
            0.0,
            max(point_risk(rho, n, mode) - curve.value(rho) for rho in grid),
        )
        if deficit > 0:
            curve.segments = [(m, c + deficit, iv) for m, c, iv in segs]
    return curve


# case-study quadratic surrogate r = a rho^2 + b; valid with a quadratic
# solver only, kept for external adapters
QUADRATIC_SURROGATE = {"a": -0.005, "b": 1.01}
