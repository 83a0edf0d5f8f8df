"""Smoothing Anderson acceleration for nonsmooth contractive fixed-point problems."""

from .accel import (
    FixedPointProblem,
    SolverConfig,
    SolverReport,
    run_solver,
)

__all__ = ["FixedPointProblem", "SolverConfig", "SolverReport", "run_solver"]
__version__ = "0.1.0"
