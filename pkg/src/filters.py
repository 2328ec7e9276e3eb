"""
Analysis steps for weighted ensembles.

Provides:
- enkf_analysis: perturbed-observation EnKF with the weighted covariance
- pure_sis_analysis: importance reweighting, members unchanged
- enkf_sis_analysis: EnKF predictor followed by an importance-weight
  corrector whose prior/proposal density ratio is estimated by counting
  members in k-nearest-neighbor balls
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .config import (
    FALLBACK_ERROR,
    FALLBACK_LIKELIHOOD_ONLY,
    FILTER_ENKF,
    FILTER_ENKF_SIS,
    FILTER_SIS,
    ExperimentConfig,
)
from .ensemble import (
    GaussianObservation,
    RngStream,
    WeightedEnsemble,
    covariance_action,
    effective_sample_size,
    maybe_resample,
    normalize_log_weights,
)
from .exceptions import (
    ConfigurationError,
    DegenerateWeightsError,
    InvalidEnsembleError,
    SingularCovarianceError,
    ValidationError,
)
from .logging_config import get_logger
from .spectral import EnsembleNorm, EuclideanNorm

logger = get_logger(__name__)

Predictor = Callable[[WeightedEnsemble, GaussianObservation, RngStream], WeightedEnsemble]


@dataclass
class AnalysisConfig:
    """
    Settings of the EnKF-SIS corrector.

    Attributes:
        bandwidth_rank: Neighbor rank defining h_k (None = floor(sqrt(N)))
        norm: Norm for member distances (U-norm for fields, Euclidean for scalars)
        degenerate_fallback: 'error' | 'likelihood_only' when all weights vanish
        include_self: Count u_k itself as its own nearest neighbor
        numerator_weight_index: 'ell' sums w_l^f over the ball; 'k' uses count * w_k^f
        ess_resample_threshold: Resample when ESS < threshold * N (0 = never)
    """
    bandwidth_rank: Optional[int] = None
    norm: EnsembleNorm = field(default_factory=EuclideanNorm)
    degenerate_fallback: str = FALLBACK_LIKELIHOOD_ONLY
    include_self: bool = False
    numerator_weight_index: str = "ell"
    ess_resample_threshold: float = 0.0

    @classmethod
    def from_experiment(cls, cfg: ExperimentConfig, norm: EnsembleNorm) -> "AnalysisConfig":
        return cls(
            bandwidth_rank=cfg.bandwidth_rank,
            norm=norm,
            degenerate_fallback=cfg.degenerate_fallback,
            include_self=cfg.knn_include_self,
            numerator_weight_index=cfg.numerator_weight_index,
            ess_resample_threshold=cfg.ess_resample_threshold,
        )

    def rank_for(self, size: int) -> int:
        """
        Neighbor rank for an ensemble of the given size.

        Raises:
            ConfigurationError: If the rank is outside [1, N-1]
        """
        rank = self.bandwidth_rank if self.bandwidth_rank is not None else math.isqrt(size)
        upper = size if self.include_self else size - 1
        if not 1 <= rank <= upper:
            raise ConfigurationError(
                f"Must satisfy 1 <= bandwidth_rank <= {upper} for N={size}",
                setting="bandwidth_rank"
            )
        return rank


def enkf_analysis(
    forecast: WeightedEnsemble,
    obs: GaussianObservation,
    rng: RngStream,
    perturb_data: bool = True
) -> WeightedEnsemble:
    """
    Perturbed-observation EnKF with the weighted forecast covariance.

    u_k^a = u_k^f + QH^T (HQH^T + R)^{-1} (d_k - H u_k^f), d_k ~ N(d, R).
    Weights are carried over unchanged.

    Args:
        forecast: Forecast ensemble, N >= 2
        obs: Observation
        rng: Stream for the data perturbations
        perturb_data: If False, every d_k equals d (closed-form tests)

    Raises:
        InvalidEnsembleError: If N < 2 or H does not match the state
        SingularCovarianceError: If HQH^T + R cannot be factorized
    """
    if forecast.size < 2:
        raise InvalidEnsembleError("EnKF needs at least 2 members", size=forecast.size, dimension=forecast.dim)
    qht, hqht = covariance_action(forecast, obs.operator)
    innovation_cov = hqht + obs.noise_cov
    try:
        factor = cho_factor(innovation_cov, lower=True)
    except (LinAlgError, np.linalg.LinAlgError) as e:
        raise SingularCovarianceError("not positive definite", matrix="HQH^T + R", details=str(e))

    if perturb_data:
        perturbed = obs.sample_data(forecast.size, rng)
    else:
        perturbed = np.tile(obs.data, (forecast.size, 1))
    innovations = perturbed - obs.apply(forecast.members)
    increments = (qht @ cho_solve(factor, innovations.T)).T
    return WeightedEnsemble(forecast.members + increments, forecast.weights)


def _neighbor_rank_value(distances: np.ndarray, rank: int) -> np.ndarray:
    """rank-th smallest entry of each row (1-based rank)."""
    return np.partition(distances, rank - 1, axis=1)[:, rank - 1]


def knn_bandwidths(analysis: WeightedEnsemble, cfg: AnalysisConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bandwidths h_k for every analysis member.

    Returns:
        (h of shape (N,), analysis-to-analysis distance matrix)
    """
    rank = cfg.rank_for(analysis.size)
    distances = cfg.norm.distances(analysis.members, analysis.members)
    ranked = distances.copy()
    if not cfg.include_self:
        np.fill_diagonal(ranked, np.inf)
    return _neighbor_rank_value(ranked, rank), distances


def knn_bandwidth(
    k: int,
    analysis: WeightedEnsemble,
    norm: EnsembleNorm,
    bandwidth_rank: Optional[int] = None,
    include_self: bool = False
) -> float:
    """
    Distance from u_k^a to its bandwidth_rank-th nearest analysis member.

    Self is excluded unless include_self is set.
    """
    cfg = AnalysisConfig(bandwidth_rank=bandwidth_rank, norm=norm, include_self=include_self)
    rank = cfg.rank_for(analysis.size)
    row = norm.distances(analysis.members[k], analysis.members)[0]
    if not include_self:
        row = np.delete(row, k)
    return float(np.partition(row, rank - 1)[rank - 1])


def density_ratio_estimate(
    k: int,
    forecast: WeightedEnsemble,
    analysis: WeightedEnsemble,
    h_k: float,
    norm: EnsembleNorm,
    numerator_weight_index: str = "ell"
) -> float:
    """
    Count-based estimate of p^f(u_k^a) / p^p(u_k^a).

    Numerator: forecast weight inside the closed ball of radius h_k around
    u_k^a. Denominator: fraction of analysis members inside the same ball,
    at least 1/N since u_k^a is always inside.
    """
    if h_k < 0:
        raise ValidationError("bandwidth must be nonnegative", field="h_k")
    centre = analysis.members[k]
    inside_forecast = norm.distances(centre, forecast.members)[0] <= h_k
    inside_analysis = norm.distances(centre, analysis.members)[0] <= h_k
    if numerator_weight_index == "k":
        numerator = np.count_nonzero(inside_forecast) * forecast.weights[k]
    else:
        numerator = float(forecast.weights @ inside_forecast)
    denominator = np.count_nonzero(inside_analysis) / analysis.size
    return float(numerator / denominator)


def density_ratios(
    forecast: WeightedEnsemble,
    analysis: WeightedEnsemble,
    cfg: AnalysisConfig
) -> np.ndarray:
    """density_ratio_estimate for every analysis member at once."""
    bandwidths, analysis_distances = knn_bandwidths(analysis, cfg)
    forecast_distances = cfg.norm.distances(analysis.members, forecast.members)
    inside_forecast = forecast_distances <= bandwidths[:, None]
    inside_analysis = analysis_distances <= bandwidths[:, None]
    if cfg.numerator_weight_index == "k":
        numerators = inside_forecast.sum(axis=1) * forecast.weights
    else:
        numerators = inside_forecast @ forecast.weights
    denominators = inside_analysis.sum(axis=1) / analysis.size
    return numerators / denominators


def _check_pair(forecast: WeightedEnsemble, analysis: WeightedEnsemble) -> None:
    if forecast.size != analysis.size or forecast.dim != analysis.dim:
        raise InvalidEnsembleError(
            f"forecast is {forecast.size}x{forecast.dim}, analysis is {analysis.size}x{analysis.dim}",
            size=analysis.size, dimension=analysis.dim
        )


def sis_correct(
    forecast: WeightedEnsemble,
    analysis: Union[WeightedEnsemble, np.ndarray],
    obs: GaussianObservation,
    cfg: AnalysisConfig
) -> WeightedEnsemble:
    """
    Corrector: w_k^a proportional to p(d|u_k^a) times the estimated density ratio.

    Args:
        forecast: Prior sample with its weights
        analysis: Predictor output (only its members are used)
        obs: Observation
        cfg: Corrector settings

    Raises:
        InvalidEnsembleError: If the ensembles differ in size or dimension
        DegenerateWeightsError: If all weights vanish and the fallback is 'error'
    """
    if not isinstance(analysis, WeightedEnsemble):
        analysis = WeightedEnsemble.uniform(analysis)
    _check_pair(forecast, analysis)

    log_likelihoods = obs.log_likelihoods(analysis.members)
    ratios = density_ratios(forecast, analysis, cfg)
    with np.errstate(divide="ignore"):
        log_weights = log_likelihoods + np.log(ratios)

    try:
        weights = normalize_log_weights(log_weights)
    except DegenerateWeightsError:
        if cfg.degenerate_fallback == FALLBACK_ERROR:
            raise
        logger.warning(
            "All corrector weights vanished (no forecast member inside any ball); "
            "falling back to likelihood-only weights"
        )
        weights = normalize_log_weights(log_likelihoods)

    logger.debug(
        f"Corrector: {np.count_nonzero(ratios)} / {ratios.size} nonzero ratios, "
        f"ESS {effective_sample_size(weights):.1f}"
    )
    return WeightedEnsemble(analysis.members, weights)


def pure_sis_analysis(forecast: WeightedEnsemble, obs: GaussianObservation) -> WeightedEnsemble:
    """
    Importance reweighting w_k^a proportional to w_k^f p(d|u_k); members unchanged.

    Raises:
        DegenerateWeightsError: If every weight vanishes
    """
    with np.errstate(divide="ignore"):
        log_prior = np.log(forecast.weights)
    weights = normalize_log_weights(log_prior + obs.log_likelihoods(forecast.members))
    return WeightedEnsemble(forecast.members, weights)


def enkf_sis_analysis(
    forecast: WeightedEnsemble,
    obs: GaussianObservation,
    cfg: AnalysisConfig,
    rng: RngStream,
    predictor: Optional[Predictor] = None,
    correct: bool = True
) -> WeightedEnsemble:
    """
    EnKF predictor followed by the density-ratio corrector.

    Args:
        forecast: Forecast ensemble
        obs: Observation
        cfg: Corrector settings
        rng: Stream for the predictor's data perturbations
        predictor: Replacement for enkf_analysis (test hook)
        correct: If False, return the predictor output unchanged (test hook)
    """
    predict = predictor or enkf_analysis
    proposal = predict(forecast, obs, rng)
    if not correct:
        return proposal
    return sis_correct(forecast, proposal, obs, cfg)


def run_analysis(
    filter_name: str,
    forecast: WeightedEnsemble,
    obs: GaussianObservation,
    cfg: AnalysisConfig,
    rng: RngStream
) -> WeightedEnsemble:
    """
    Dispatch one analysis step by filter name, then apply the optional
    ESS-threshold resampling.
    """
    if filter_name == FILTER_ENKF:
        analysis = enkf_analysis(forecast, obs, rng.spawn(0))
    elif filter_name == FILTER_SIS:
        analysis = pure_sis_analysis(forecast, obs)
    elif filter_name == FILTER_ENKF_SIS:
        analysis = enkf_sis_analysis(forecast, obs, cfg, rng.spawn(0))
    else:
        raise ConfigurationError(f"Unknown filter '{filter_name}'", setting="filter")
    return maybe_resample(analysis, cfg.ess_resample_threshold, rng.spawn(1))
