"""Numerical laboratory for parabolic quasi-variational inequalities of obstacle type."""

from .errors import (
    AssumptionViolation,
    ConfigError,
    DomainError,
    InternalInconsistencyError,
    InvalidDataError,
    InvalidParameterError,
    NonConvergenceError,
    PqviError,
    ShapeError,
    SizeError,
    StaleSolutionError,
)
from .grid import DiscreteOperator, SpaceGrid, SpaceTimeFunction, TimeGrid, assemble_operator, average_source, build_interpolants, norms

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "ConfigError",
    "DiscreteOperator",
    "DomainError",
    "InternalInconsistencyError",
    "InvalidDataError",
    "InvalidParameterError",
    "NonConvergenceError",
    "PqviError",
    "ShapeError",
    "SizeError",
    "SpaceGrid",
    "SpaceTimeFunction",
    "StaleSolutionError",
    "TimeGrid",
    "assemble_operator",
    "average_source",
    "build_interpolants",
    "norms",
]
