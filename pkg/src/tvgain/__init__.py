"""Discrete-time adaptive parameter estimation with a self-regulating gain matrix."""

from .estimator import TRACE_COLUMNS, EstimatorState, TheoremBounds, run, step, theorem_bounds, verify_decay
from .excitation import ExcitationReport, check_fe, check_pe, detect, omega_trajectory
from .gain import Hyperparameters, InfeasibleError, scalar_bounds, select_hyperparameters, update_gamma
from .linalg import kailath_inverse, psd_order, sym_eigen
from .plant import ParamTrajectory, Plant, PlantConfig, arma_theta

__version__ = "0.1.0"

__all__ = [
    "TRACE_COLUMNS", "EstimatorState", "TheoremBounds", "run", "step", "theorem_bounds", "verify_decay",
    "ExcitationReport", "check_fe", "check_pe", "detect", "omega_trajectory",
    "Hyperparameters", "InfeasibleError", "scalar_bounds", "select_hyperparameters", "update_gamma",
    "kailath_inverse", "psd_order", "sym_eigen",
    "ParamTrajectory", "Plant", "PlantConfig", "arma_theta",
]
