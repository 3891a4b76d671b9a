"""Risk-aware tube-MPC engine for runtime-assigned temporal-logic tasks."""

from .encoding import EncodedSpec, EncodingError, conjoin, encode
from .milp import (
    BuiltinSolver,
    MilpError,
    MilpModel,
    MilpSolution,
    ScipyMilpAdapter,
    SubprocessSolver,
    make_solver,
)
from .probability import Normalization, RiskCurve, SystemModel, normalize
from .scheduler import Engine, EngineConfig, EngineError, ScenarioInfeasible
from .simulate import (
    EpisodeTrace,
    Scenario,
    ScenarioError,
    load_scenario,
    monte_carlo,
    run_episode,
)
from .stl import Formula, Predicate, StlError, active_horizon, monitor, parse, to_nnf

__version__ = "0.1.0"

__all__ = [
    "EncodedSpec",
    "EncodingError",
    "conjoin",
    "encode",
    "BuiltinSolver",
    "MilpError",
    "MilpModel",
    "MilpSolution",
    "ScipyMilpAdapter",
    "SubprocessSolver",
    "make_solver",
    "Normalization",
    "RiskCurve",
    "SystemModel",
    "normalize",
    "Engine",
    "EngineConfig",
    "EngineError",
    "ScenarioInfeasible",
    "EpisodeTrace",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "monte_carlo",
    "run_episode",
    "Formula",
    "Predicate",
    "StlError",
    "active_horizon",
    "monitor",
    "parse",
    "to_nnf",
    "__version__",
]
