"""Structured-grid solver for the local balance laws of a kinetic continuum."""

from . import io
from .config import ScenarioConfig, initial_state, load_scenario, parse_scenario
from .equations import Problem, diagnostics, energy_theorem_balance, evaluate, impose_boundary_values, rhs
from .grid import SIDES, BoundarySpec, Grid, SideBC, divergence, gradient, laplacian, pad
from .integrate import RunResult, run, stable_dt, step_rk4
from .state import CONSTRAINT_MODES, FieldState, SolverConfig, SourceSpec

__all__ = [
    "BoundarySpec",
    "ScenarioConfig",
    "initial_state",
    "io",
    "load_scenario",
    "parse_scenario",
    "CONSTRAINT_MODES",
    "FieldState",
    "Grid",
    "Problem",
    "RunResult",
    "SIDES",
    "SideBC",
    "SolverConfig",
    "SourceSpec",
    "diagnostics",
    "divergence",
    "energy_theorem_balance",
    "evaluate",
    "gradient",
    "impose_boundary_values",
    "laplacian",
    "pad",
    "rhs",
    "run",
    "stable_dt",
    "step_rk4",
]
