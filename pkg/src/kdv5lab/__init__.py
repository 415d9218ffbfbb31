"""Numerical laboratory for the fifth-order KdV equation in weighted spaces."""

from .config import ExperimentSpec, load_config
from .duhamel import Coefficients, a2_duhamel, a2_spectral, a3_duhamel
from .errors import (DIVERGENT, AbortedRun, AccuracyFailure, AccuracyWarning, InvalidInput,
                     InvalidParameter, InvalidResolution, KdvLabError, Unsupported, UsageError)
from .experiments import ReportBundle, run
from .norms import WeightParams, admissible, h_sa_norm, xsab_norm, z_norm
from .solver import SolverConfig, Trajectory, evolve
from .spectral import (FrequencyGrid, PeriodicGrid, SpectralField, apply_propagator,
                       forward_transform, inverse_transform)

__version__ = "0.1.0"

__all__ = [
    "AbortedRun", "AccuracyFailure", "AccuracyWarning", "Coefficients", "DIVERGENT",
    "ExperimentSpec", "FrequencyGrid", "InvalidInput", "InvalidParameter", "InvalidResolution",
    "KdvLabError", "PeriodicGrid", "ReportBundle", "SolverConfig", "SpectralField",
    "Trajectory", "Unsupported", "UsageError", "WeightParams", "a2_duhamel", "a2_spectral",
    "a3_duhamel", "admissible", "apply_propagator", "evolve", "forward_transform",
    "h_sa_norm", "inverse_transform", "load_config", "run", "xsab_norm", "z_norm",
]
