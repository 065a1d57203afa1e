"""Optimal-transport feedback particle filters for linear-Gaussian models."""

from .config import ExperimentConfig, config_from_dict, config_to_dict, parse_config
from .estimators import EnsembleFilter, KalmanBucyFilter
from .exceptions import (AREDivergence, ConfigError, InconsistentSingularSystem,
                         NumericalBlowup, NumericalError, OTFPFError,
                         SingularCovariance)
from .experiments import (MseRecord, mse_pf_exact, run_chaos, run_error_decay,
                          run_static_compare, run_sweep)
from .kalman import GaussianBelief, SteadyState, kalman_filter, kalman_step, solve_are
from .matrix_eq import (optimal_gaussian_map, pseudo_inverse, ricc_rhs,
                        solve_lyapunov_spd, solve_omega, solve_singular_gain,
                        sqrt_ricc)
from .model import LinearGaussianModel, PathRecord, TimeGrid, simulate_truth_obs
from .particle_filters import (Ensemble, FilterVariant, MeanFieldEnsemble,
                               empirical_moments, init_ensemble, run_ensemble,
                               step, step_det_fpf, step_mean_field,
                               step_perturbed_enkf, step_singular_fpf,
                               step_stochastic_fpf)

__all__ = [
    "AREDivergence", "ConfigError", "Ensemble", "EnsembleFilter",
    "ExperimentConfig", "FilterVariant", "GaussianBelief",
    "InconsistentSingularSystem", "KalmanBucyFilter", "LinearGaussianModel",
    "MeanFieldEnsemble", "MseRecord", "NumericalBlowup", "NumericalError",
    "OTFPFError", "PathRecord", "SingularCovariance", "SteadyState", "TimeGrid",
    "config_from_dict", "config_to_dict", "empirical_moments", "init_ensemble",
    "kalman_filter", "kalman_step", "mse_pf_exact", "optimal_gaussian_map",
    "parse_config", "pseudo_inverse", "ricc_rhs", "run_chaos",
    "run_ensemble", "run_error_decay", "run_static_compare", "run_sweep",
    "simulate_truth_obs", "solve_are", "solve_lyapunov_spd", "solve_omega",
    "solve_singular_gain", "sqrt_ricc", "step", "step_det_fpf",
    "step_mean_field", "step_perturbed_enkf", "step_singular_fpf",
    "step_stochastic_fpf",
]
