"""Numerical toolkit for fractional iterative hybrid differential equations.

``D^alpha[v - psi(s, v, v(v))] = aleph(s, v, v(v))``, ``v(s0) = v0``, with a
Riemann-Liouville derivative of order ``0 < alpha < 1``.
"""

from .errors import (
    ConfigError, DataError, DomainError, DomainEscapeError, FihdeError,
    MonotonicityError, OracleError, PreconditionError, SolverError,
)
from .expr import Expression
from .fraccalc import DomainPolicy, Grid, GridFunction, Interp, rl_derivative, rl_integral
from .monotone import check_uniqueness, iterate_extremal, verify_lower_upper, verify_mixed_pair
from .problem import ProblemSpec, SamplingBox, check_all
from .solver import SolverConfig, solve_fihie

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DomainError", "DomainEscapeError", "FihdeError",
    "MonotonicityError", "OracleError", "PreconditionError", "SolverError",
    "Expression", "DomainPolicy", "Grid", "GridFunction", "Interp", "rl_derivative", "rl_integral",
    "check_uniqueness", "iterate_extremal", "verify_lower_upper", "verify_mixed_pair",
    "ProblemSpec", "SamplingBox", "check_all", "SolverConfig", "solve_fihie",
]
