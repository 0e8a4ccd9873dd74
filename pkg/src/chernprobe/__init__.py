"""Chern-number probing of a swept qubit under continuous weak measurement and feedback."""

__version__ = "0.1.0"

from .config import RunConfig, load_config, parse_config
from .engine import (TrajectoryRecord, simulate_ensemble, simulate_trajectory,
                     solve_feedback_unconditional, solve_unconditional)
from .errors import (ChernProbeError, ConfigError, DegenerateFieldError, ImpureStateError,
                     IncompleteSweepError, InfeasibleError, MissingSignalError,
                     StepInstabilityError)
from .estimation import (ChernEstimate, EnsembleStats, chern_from_expectation, chern_from_signal,
                         corrected_chern, ensemble_estimate, shot_noise_bound)
from .experiments import (OptimizationSpec, SweepSpec, optimize_parameters, rabi_demo,
                          run_sweep, scan_kappa)
from .feedback import FeedbackParams, feedback_params_adiabatic, feedback_params_exact
from .model import (ConstantDrive, MeasurementConfig, QuenchProtocol, QubitState,
                    analytic_berry_curvature, analytic_chern, mhz, to_mhz)

__all__ = [
    "__version__", "RunConfig", "load_config", "parse_config", "TrajectoryRecord",
    "simulate_ensemble", "simulate_trajectory", "solve_feedback_unconditional",
    "solve_unconditional", "ChernProbeError", "ConfigError", "DegenerateFieldError",
    "ImpureStateError", "IncompleteSweepError", "InfeasibleError", "MissingSignalError",
    "StepInstabilityError", "ChernEstimate", "EnsembleStats", "chern_from_expectation",
    "chern_from_signal", "corrected_chern", "ensemble_estimate", "shot_noise_bound",
    "OptimizationSpec", "SweepSpec", "optimize_parameters", "rabi_demo", "run_sweep",
    "scan_kappa", "FeedbackParams", "feedback_params_adiabatic", "feedback_params_exact",
    "ConstantDrive", "MeasurementConfig", "QuenchProtocol", "QubitState",
    "analytic_berry_curvature", "analytic_chern", "mhz", "to_mhz",
]
