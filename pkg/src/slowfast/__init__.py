"""Simulation, averaging and convergence-rate verification for
time-inhomogeneous slow-fast SDE systems."""

__version__ = "0.1.0"

from .rates import RateFunction, alpha_integral, lambda_gamma
from .models import Forcing, FrozenModel, SlowFastModel, build_model, example1, example2, linear_nd
from .engine import (
    CoupledSamplePair,
    PathEnsemble,
    TimeGrid,
    simulate_averaged,
    simulate_coupled,
    simulate_frozen,
    simulate_y_variational,
)

__all__ = [
    "__version__",
    "RateFunction",
    "alpha_integral",
    "lambda_gamma",
    "Forcing",
    "FrozenModel",
    "SlowFastModel",
    "build_model",
    "example1",
    "example2",
    "linear_nd",
    "CoupledSamplePair",
    "PathEnsemble",
    "TimeGrid",
    "simulate_averaged",
    "simulate_coupled",
    "simulate_frozen",
    "simulate_y_variational",
]
