"""Numerical lab for the vectorial p-Laplacian Bernoulli free-boundary problem."""

__version__ = "0.1.0"

from .core import (ConstraintViolation, Grid, GridMismatch, OutOfDomain, Problem, VectorState, interpolate,
                   make_problem, pnorm)
from .functional import EnergyBreakdown, TestFunction, evaluate_J, evaluate_J0, subharmonic_measure
from .minimizer import MinimizeResult, SolveSchedule, brute_force_oracle, minimize, truncation_step
from .plap import solve_p_dirichlet

__all__ = [
    "ConstraintViolation", "Grid", "GridMismatch", "OutOfDomain", "Problem", "VectorState", "interpolate",
    "make_problem", "pnorm", "EnergyBreakdown", "TestFunction", "evaluate_J", "evaluate_J0",
    "subharmonic_measure", "MinimizeResult", "SolveSchedule", "brute_force_oracle", "minimize",
    "truncation_step", "solve_p_dirichlet", "__version__",
]
