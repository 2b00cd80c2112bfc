"""Measurement-induced spin squeezing of a cavity-coupled atomic ensemble
under continuous homodyne monitoring."""

from .dynamics import IntegrationError, SimConfig, TrajectoryRecord, run_trajectory
from .operators import ModelParams
from .squeezing import EnsembleSummary, FitResult, ensemble_average, fit_power_law, squeezing_parameter

__version__ = "0.1.0"

__all__ = [
    "EnsembleSummary",
    "FitResult",
    "IntegrationError",
    "ModelParams",
    "SimConfig",
    "TrajectoryRecord",
    "ensemble_average",
    "fit_power_law",
    "run_trajectory",
    "squeezing_parameter",
]
