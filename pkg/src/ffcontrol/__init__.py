"""Measurement-feedback steering of spin chains into entangled dark states,
with classical absorbing-walk solvers predicting the relaxation."""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend
from .state import LocalOperator, MeasurementRecord, QuditState
from .protocols import ProtocolSpec, TargetState, target_state
from .channel import DensityMatrix, evolve_channel
from .trajectory import TrajectoryConfig, run_ensemble, run_trajectory
from .walk import build_generator, mu_exponent, smallest_eigenvalue
from .analysis import dicke_entropy, fit_cutoff_collapse

__all__ = [
    "QuditState",
    "LocalOperator",
    "MeasurementRecord",
    "ProtocolSpec",
    "TargetState",
    "target_state",
    "DensityMatrix",
    "evolve_channel",
    "TrajectoryConfig",
    "run_trajectory",
    "run_ensemble",
    "build_generator",
    "smallest_eigenvalue",
    "mu_exponent",
    "fit_cutoff_collapse",
    "dicke_entropy",
    "kernel_backend",
    "__version__",
]
