"""
nonga - Source Package v1.0

Ensemble data assimilation for non-Gaussian posteriors:
- EnKF predictor with weighted covariance
- Sequential importance sampling (SIS)
- EnKF-SIS: EnKF proposal reweighted by k-NN density ratios
- Exact Fokker-Planck filter for the double-well model
- Experiment harness and CLI
"""

from .exceptions import (
    AppError,
    ValidationError,
    InvalidEnsembleError,
    SingularCovarianceError,
    DegenerateWeightsError,
    DegeneratePosteriorError,
    ConfigurationError,
    ExperimentError,
)
from .config import Config, ExperimentConfig, get_config, load_experiment_config
from .ensemble import (
    RngStream,
    WeightedEnsemble,
    GaussianObservation,
    covariance_action,
    normalize_weights,
    multinomial_resample,
    effective_sample_size,
)
from .spectral import SpectralBasis, DecaySpec, UNorm, EuclideanNorm, sine_basis, sample_initial_ensemble
from .filters import AnalysisConfig, enkf_analysis, pure_sis_analysis, sis_correct, enkf_sis_analysis, run_analysis
from .models import DoubleWellModel, advance_ensemble, simulate_reference
from .oracle import DensityGrid, fp_advance, bayes_update_grid, grid_mean, stationary_density
from .harness import RunReport, run_experiment, read_report, write_report, sweep

__all__ = [
    # Exceptions
    "AppError",
    "ValidationError",
    "InvalidEnsembleError",
    "SingularCovarianceError",
    "DegenerateWeightsError",
    "DegeneratePosteriorError",
    "ConfigurationError",
    "ExperimentError",
    # Config
    "Config",
    "ExperimentConfig",
    "get_config",
    "load_experiment_config",
    # Ensembles
    "RngStream",
    "WeightedEnsemble",
    "GaussianObservation",
    "covariance_action",
    "normalize_weights",
    "multinomial_resample",
    "effective_sample_size",
    # Sine basis
    "SpectralBasis",
    "DecaySpec",
    "UNorm",
    "EuclideanNorm",
    "sine_basis",
    "sample_initial_ensemble",
    # Filters
    "AnalysisConfig",
    "enkf_analysis",
    "pure_sis_analysis",
    "sis_correct",
    "enkf_sis_analysis",
    "run_analysis",
    # Models and exact filter
    "DoubleWellModel",
    "advance_ensemble",
    "simulate_reference",
    "DensityGrid",
    "fp_advance",
    "bayes_update_grid",
    "grid_mean",
    "stationary_density",
    # Harness
    "RunReport",
    "run_experiment",
    "read_report",
    "write_report",
    "sweep",
]

__version__ = "1.0.0"
