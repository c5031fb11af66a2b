"""Capacitated spatiotemporal matching.

Demand spread over space and split into finitely many types is matched to
capacitated stations over a time horizon by minimizing a finite-dimensional
convex dual over station/type weights ``eta``.  From the weights the package
derives spatial cells, temporal schedules, envy-free prices, slot menus and
capacity allocations.
"""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    CapacityProfile,
    DemandField,
    PiecewiseLinear,
    PowerDistance,
    Scenario,
    ScenarioError,
    SpatialGrid,
    Station,
    TwoPieceLinear,
    load_scenario,
)
from .partition import MatchingPlan, extract_plan  # noqa: E402
from .solver import SolveOptions, SolveReport, solve_stbd, stbd_objective  # noqa: E402

__all__ = [
    "CapacityProfile",
    "DemandField",
    "MatchingPlan",
    "PiecewiseLinear",
    "PowerDistance",
    "Scenario",
    "ScenarioError",
    "SolveOptions",
    "SolveReport",
    "SpatialGrid",
    "Station",
    "TwoPieceLinear",
    "extract_plan",
    "load_scenario",
    "solve_stbd",
    "stbd_objective",
    "__version__",
]
