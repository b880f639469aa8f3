"""Figure rendering for vnhsim trajectory CSV output."""

from .data import SchemaError, TrajectoryTable, load_table, scenario_name
from .render import (
    FIGURE_NAMES,
    constraint_figure,
    control_figure,
    energy_figure,
    render,
    trajectories_figure,
)

__all__ = [
    "FIGURE_NAMES",
    "SchemaError",
    "TrajectoryTable",
    "constraint_figure",
    "control_figure",
    "energy_figure",
    "load_table",
    "render",
    "scenario_name",
    "trajectories_figure",
]

__version__ = "0.1.0"
