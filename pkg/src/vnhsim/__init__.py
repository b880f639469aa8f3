"""Simulation of mechanical systems steered onto velocity constraints.

The package builds mechanical systems on configuration space R^n with an
arbitrary kinetic-energy metric, imposes velocity-level constraints through
exact feedback, and integrates both the resulting closed loop and the
classical multiplier dynamics for comparison.
"""

from .constraints import (
    ConstraintSet,
    on_manifold,
    project_to_manifold,
    regularity,
)
from .control import MechanicalSystem, synthesize
from .dynamics import (
    TrajectoryRecord,
    chetaev_multipliers,
    compare_trajectories,
    proposition4_check,
    rk4_integrate,
    simulate_closed_loop,
    simulate_nonholonomic,
)
from .errors import (
    ConstraintDegeneracyError,
    EvaluationError,
    MetricDegeneracyError,
    ParseError,
    ScenarioError,
    TransversalityViolation,
    VnhsimError,
)
from .expressions import parse
from .riemannian import ForceCovector, MetricField, PotentialField, TangentState
from .scenarios import Scenario, builtin, load, rebuild, resolve, save

__all__ = [
    "ConstraintSet",
    "ConstraintDegeneracyError",
    "EvaluationError",
    "ForceCovector",
    "MechanicalSystem",
    "MetricDegeneracyError",
    "MetricField",
    "ParseError",
    "PotentialField",
    "Scenario",
    "ScenarioError",
    "TangentState",
    "TrajectoryRecord",
    "TransversalityViolation",
    "VnhsimError",
    "builtin",
    "chetaev_multipliers",
    "compare_trajectories",
    "load",
    "on_manifold",
    "parse",
    "project_to_manifold",
    "proposition4_check",
    "rebuild",
    "regularity",
    "resolve",
    "rk4_integrate",
    "save",
    "simulate_closed_loop",
    "simulate_nonholonomic",
    "synthesize",
]

__version__ = "0.1.0"
