"""Semiclassical Einstein equations in flat FLRW with a massive scalar field.

Local existence machinery: a retarded log-kernel operator and its inverse,
mode functions and renormalized expectation values, the initial quantum
state, and a Picard iteration for the traced equation.
"""
from .errors import ConfigError, SolverError
from .geometry import InitialData, Params, TimeGrid, Trajectory, derive_initial_conditions

__version__ = "0.1.0"

__all__ = ["ConfigError", "SolverError", "InitialData", "Params", "TimeGrid", "Trajectory",
           "derive_initial_conditions", "__version__"]
