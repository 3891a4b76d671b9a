import numpy as np
import pytest

from stlmpc import stl
from stlmpc.milp import ScipyMilpAdapter
from stlmpc.probability import SystemModel
from stlmpc.simulate import load_scenario

try:
    from importlib.resources import files
except ImportError:  # pragma: no cover
    from importlib_resources import files

SCENARIOS = files("stlmpc") / "scenarios"


@pytest.fixture(scope="session")
def casestudy():
    return load_scenario(str(SCENARIOS / "casestudy.json"))


@pytest.fixture(scope="session")
def ci_small():
    return load_scenario(str(SCENARIOS / "ci_small.json"))


@pytest.fixture(scope="session")
def adapter():
    return ScipyMilpAdapter()


@pytest.fixture
def box2():
    """Unit-row 2-D box predicates used across tests."""

    def make(name, x_lo, x_hi, y_lo, y_hi):
        return stl.Predicate.normalized(
            [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            [x_lo, -x_hi, y_lo, -y_hi],
            name=name,
        )

    return make


@pytest.fixture
def interval1d():
    """1-D interval predicate [lo, hi] as two unit rows."""

    def make(name, lo, hi):
        return stl.Predicate([[1.0], [-1.0]], [lo, -hi], name=name)

    return make


@pytest.fixture
def tiny_model():
    """Stable scalar system with mild noise."""
    return SystemModel([[0.5]], [[1.0]], [[-0.2]], "gaussian", [[0.04]])


def random_stable_model(rng, n=2):
    """Random stable n-D system for property tests."""
    while True:
        A = rng.uniform(-1.0, 1.0, size=(n, n))
        B = np.eye(n)
        K = -A + np.diag(rng.uniform(-0.6, 0.6, size=n))
        A_K = A + B @ K
        if np.max(np.abs(np.linalg.eigvals(A_K))) < 0.95:
            cov = np.diag(rng.uniform(0.001, 0.01, size=n))
            return SystemModel(A, B, K, "gaussian", cov)
