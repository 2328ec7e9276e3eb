"""
Experiment harness.

Provides:
- The four experiments: bimodal prior, double-well twin experiment,
  sine-basis bimodal prior, sine-basis far-away data
- Scoring helpers: marginal histograms, RMSE, mode counting
- RunReport and its CSV/JSON round trip
- Multi-seed RMSE sweeps on a thread pool
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from .config import (
    EXPERIMENT_BIMODAL,
    EXPERIMENT_DOUBLEWELL,
    EXPERIMENT_SINE_BIMODAL,
    EXPERIMENT_SINE_FAR,
    FILTER_ENKF_SIS,
    FILTERS,
    ExperimentConfig,
)
from .ensemble import (
    GaussianObservation,
    RngStream,
    WeightedEnsemble,
    effective_sample_size,
    multinomial_resample,
    normalize_weights,
    point_evaluation_row,
    weighted_mean,
)
from .exceptions import ExperimentError, ValidationError
from .filters import AnalysisConfig, run_analysis
from .logging_config import get_logger, run_context
from .models import DoubleWellModel, advance_ensemble, find_switching_reference, simulate_reference, switch_time
from .oracle import DensityGrid, bayes_update_grid, fp_advance, grid_mean
from .spectral import DecaySpec, EuclideanNorm, SpectralBasis, UNorm, pointwise_variance, sample_initial_ensemble, sine_basis

logger = get_logger(__name__)

# Random stream ids; each experiment stage draws from its own stream
STREAM_PRIOR = 1
STREAM_REFERENCE = 2
STREAM_FORECAST = 3
STREAM_ANALYSIS = 4

# Histogram ranges when hist_lo/hist_hi are unset
SCALAR_HIST_RANGE = (-4.0, 4.0)
FAR_HIST_RANGE = (-8.0, 8.0)

# Resolution of the exact bimodal posterior
EXACT_GRID_NODES = 1601

SERIES_COLUMNS = ["time", "filter_mean", "optimal_mean", "ess"]
MARGINAL_COLUMNS = ["x", "bin_lo", "bin_hi", "mass"]
CSV_FLOAT_FORMAT = "%.17g"

SENSITIVITY_KAPPAS = (0.75, 1.0, 1.25)


@dataclass
class RunReport:
    """
    Result of one experiment run.

    Attributes:
        experiment: Experiment name
        filter: Filter name
        seed: Run seed
        series: One row per analysis time (time, filter_mean, optimal_mean, ess)
        marginals: Histogram tables keyed by tag (e.g. 'enkf-sis_posterior')
        summary: Scalar results (RMSE, mode counts, band masses, ...)
        config: Echo of the run configuration
    """
    experiment: str
    filter: str
    seed: int
    series: pd.DataFrame
    marginals: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)


def hist_range(cfg: ExperimentConfig) -> Tuple[float, float]:
    if cfg.hist_lo is not None:
        return float(cfg.hist_lo), float(cfg.hist_hi)
    if cfg.experiment == EXPERIMENT_SINE_FAR:
        return FAR_HIST_RANGE
    return SCALAR_HIST_RANGE


def marginal_histogram(
    ens: WeightedEnsemble,
    x_index: int = 0,
    bins: int = 50,
    value_range: Tuple[float, float] = SCALAR_HIST_RANGE,
    x: float = 0.0
) -> pd.DataFrame:
    """
    Weighted histogram of the member values at one state component.

    Values outside value_range are clipped into the edge bins, so the table
    always carries unit mass. Clipped weight can raise an edge bin into a
    spurious mode; out_of_range_mass reports how much of it there is.

    Returns:
        DataFrame with columns x, bin_lo, bin_hi, mass
    """
    if bins < 1:
        raise ValidationError("must be at least 1", field="bins")
    lo, hi = value_range
    values = np.clip(ens.members[:, x_index], lo, hi)
    mass, edges = np.histogram(values, bins=bins, range=(lo, hi), weights=ens.weights)
    return pd.DataFrame({
        "x": np.full(bins, float(x)),
        "bin_lo": edges[:-1],
        "bin_hi": edges[1:],
        "mass": mass / mass.sum(),
    })


def out_of_range_mass(ens: WeightedEnsemble, value_range: Tuple[float, float]) -> float:
    """Largest weight outside value_range over all state components."""
    lo, hi = value_range
    outside = (ens.members < lo) | (ens.members > hi)
    return float((ens.weights @ outside.astype(float)).max())


def marginal_table(
    ens: WeightedEnsemble,
    mesh: np.ndarray,
    bins: int,
    value_range: Tuple[float, float]
) -> pd.DataFrame:
    """Marginal histograms at every mesh node, stacked; the shading data over x."""
    frames = [
        marginal_histogram(ens, j, bins, value_range, x=mesh[j])
        for j in range(mesh.shape[0])
    ]
    return pd.concat(frames, ignore_index=True)


def density_histogram(grid: DensityGrid, bins: int, value_range: Tuple[float, float]) -> pd.DataFrame:
    """Bin masses of a gridded density, using the same layout as marginal_histogram."""
    lo, hi = value_range
    edges = np.linspace(lo, hi, bins + 1)
    nodes = grid.nodes
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (grid.values[1:] + grid.values[:-1]) * grid.du)])
    mass = np.diff(np.interp(edges, nodes, cumulative))
    return pd.DataFrame({
        "x": np.zeros(bins),
        "bin_lo": edges[:-1],
        "bin_hi": edges[1:],
        "mass": mass / mass.sum(),
    })


def compute_rmse(series_a: Sequence[float], series_b: Sequence[float]) -> float:
    """
    Root mean squared difference of two equal-length series.

    Raises:
        ValidationError: If the lengths differ or the series are empty
    """
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}", field="series")
    if a.size == 0:
        raise ValidationError("empty series", field="series")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def count_modes(mass: Sequence[float], window: int = 5, prominence: float = 0.2) -> int:
    """
    Local maxima of a histogram after a moving-average smoothing.

    Peaks below prominence * max are ignored; maxima in the edge bins count.
    """
    mass = np.asarray(mass, dtype=float)
    smoothed = np.convolve(mass, np.ones(window) / window, mode="same")
    padded = np.concatenate([[0.0], smoothed, [0.0]])
    if padded.max() <= 0:
        return 0
    peaks, _ = find_peaks(padded, prominence=prominence * padded.max())
    return int(peaks.size)


def band_mass(values: np.ndarray, weights: np.ndarray, bands: Sequence[Sequence[float]]) -> float:
    """Total weight of members whose value lies in the union of open bands."""
    inside = np.zeros(values.shape, dtype=bool)
    for lo, hi in bands:
        inside |= (values > lo) & (values < hi)
    return float(np.sum(weights[inside]))


def bimodal_prior_weight(x: Any, center: float = 1.5, sharpness: float = 5.0) -> np.ndarray:
    """w_f(x) = exp(-s(c - x)^2) + exp(-s(-c - x)^2), unnormalized."""
    x = np.asarray(x, dtype=float)
    return np.exp(-sharpness * (center - x) ** 2) + np.exp(-sharpness * (-center - x) ** 2)


def indicator_likelihood(
    point_values: np.ndarray,
    value: float = 0.5,
    bands: Sequence[Sequence[float]] = ((-2.0, -1.0), (1.0, 2.0))
) -> np.ndarray:
    """
    value where every point value of a member lies in the union of bands, else 0.

    Args:
        point_values: (N, P) member values at the indicator points
    """
    point_values = np.atleast_2d(point_values)
    inside = np.zeros(point_values.shape, dtype=bool)
    for lo, hi in bands:
        inside |= (point_values > lo) & (point_values < hi)
    return np.where(inside.all(axis=1), value, 0.0)


def _single_record(filter_mean: float, optimal_mean: float, ess: float) -> pd.DataFrame:
    return pd.DataFrame([[0.0, filter_mean, optimal_mean, ess]], columns=SERIES_COLUMNS)


def _bimodal_prior_var(cfg: ExperimentConfig) -> float:
    if cfg.bimodal_prior_scale == "std":
        return cfg.bimodal_prior_var ** 2
    return cfg.bimodal_prior_var


def run_bimodal(cfg: ExperimentConfig) -> RunReport:
    """
    One analysis of a weighted bimodal prior against a Gaussian likelihood.

    The prior is N(0, var) samples weighted by bimodal_prior_weight. The
    exact posterior is computed on a fine grid for comparison.
    """
    prior_var = _bimodal_prior_var(cfg)
    samples = np.sqrt(prior_var) * RngStream(cfg.seed, STREAM_PRIOR).generator().standard_normal(cfg.ensemble_size)
    weights = normalize_weights(bimodal_prior_weight(samples, cfg.bimodal_mode_center, cfg.bimodal_mode_sharpness))
    forecast = WeightedEnsemble(samples, weights)
    obs = GaussianObservation.scalar(cfg.bimodal_data, cfg.bimodal_obs_var)

    analysis = run_analysis(
        cfg.filter, forecast, obs,
        AnalysisConfig.from_experiment(cfg, EuclideanNorm()),
        RngStream(cfg.seed, STREAM_ANALYSIS)
    )

    value_range = hist_range(cfg)
    lo, hi = value_range
    du = (hi - lo) / (EXACT_GRID_NODES - 1)

    def exact_posterior(u: np.ndarray) -> np.ndarray:
        prior = np.exp(-0.5 * u ** 2 / prior_var) * bimodal_prior_weight(
            u, cfg.bimodal_mode_center, cfg.bimodal_mode_sharpness)
        return prior * np.exp(-0.5 * (cfg.bimodal_data - u) ** 2 / cfg.bimodal_obs_var)

    exact = DensityGrid.from_function(exact_posterior, lo, hi, du)
    likelihood = DensityGrid.from_function(
        lambda u: np.exp(-0.5 * (cfg.bimodal_data - u) ** 2 / cfg.bimodal_obs_var), lo, hi, du)

    marginals = {
        f"{cfg.filter}_prior": marginal_histogram(forecast, 0, cfg.hist_bins, value_range),
        f"{cfg.filter}_posterior": marginal_histogram(analysis, 0, cfg.hist_bins, value_range),
        "likelihood": density_histogram(likelihood, cfg.hist_bins, value_range),
        "exact": density_histogram(exact, cfg.hist_bins, value_range),
    }
    posterior_mass = marginals[f"{cfg.filter}_posterior"]["mass"].to_numpy()
    summary = {
        "posterior_modes": count_modes(posterior_mass, cfg.smoothing_window, cfg.mode_prominence),
        "prior_modes": count_modes(
            marginals[f"{cfg.filter}_prior"]["mass"].to_numpy(), cfg.smoothing_window, cfg.mode_prominence),
        "posterior_l1_to_exact": float(np.abs(posterior_mass - marginals["exact"]["mass"].to_numpy()).sum()),
        "posterior_out_of_range_mass": out_of_range_mass(analysis, value_range),
        "smoothing_window": cfg.smoothing_window,
    }
    series = _single_record(
        float(weighted_mean(analysis)[0]), grid_mean(exact), effective_sample_size(analysis.weights))
    logger.info(f"bimodal/{cfg.filter}: {summary['posterior_modes']} posterior modes")
    return RunReport(EXPERIMENT_BIMODAL, cfg.filter, cfg.seed, series, marginals, summary, cfg.to_dict())


def observation_times(cfg: ExperimentConfig) -> np.ndarray:
    """obs_interval, 2*obs_interval, ... up to t_end."""
    count = int(math.floor(cfg.t_end / cfg.obs_interval + 1e-9))
    return cfg.obs_interval * np.arange(1, count + 1)


def run_doublewell(cfg: ExperimentConfig) -> RunReport:
    """
    Twin experiment on the double-well model, scored against the exact
    (Fokker-Planck plus grid Bayes) filter.
    """
    model = DoubleWellModel(cfg.kappa, cfg.dt, cfg.noise_convention)
    reference_seed = cfg.reference_seed
    if reference_seed is None:
        reference_seed = find_switching_reference(
            model, cfg.reference_u0, cfg.t_end, cfg.switch_target_time,
            cfg.switch_tolerance, cfg.reference_search_limit, STREAM_REFERENCE, start_seed=cfg.seed
        )
        if reference_seed is None:
            logger.warning("Using a non-switching reference; switch-dependent checks are skipped")
            reference_seed = cfg.seed

    times = observation_times(cfg)
    reference = simulate_reference(
        model, cfg.reference_u0, cfg.t_end, times, cfg.obs_var,
        RngStream(reference_seed, STREAM_REFERENCE)
    )
    t_switch = switch_time(reference.times, reference.trajectory, cfg.reference_u0)

    initial = cfg.init_mean + np.sqrt(cfg.init_var) * RngStream(cfg.seed, STREAM_PRIOR).generator().standard_normal(
        cfg.ensemble_size)
    ens = WeightedEnsemble.uniform(initial)
    grid = DensityGrid.gaussian(cfg.init_mean, cfg.init_var, cfg.grid_lo, cfg.grid_hi, cfg.grid_du)
    acfg = AnalysisConfig.from_experiment(cfg, EuclideanNorm())
    forecast_rng = RngStream(cfg.seed, STREAM_FORECAST)
    analysis_rng = RngStream(cfg.seed, STREAM_ANALYSIS)

    rows = []
    for i, data in enumerate(reference.observations):
        ens = advance_ensemble(model, ens, cfg.obs_interval, forecast_rng.spawn(i))
        obs = GaussianObservation.scalar(float(data), cfg.obs_var)
        ens = run_analysis(cfg.filter, ens, obs, acfg, analysis_rng.spawn(i))

        grid = fp_advance(grid, model, cfg.obs_interval, cfg.fp_scheme)
        grid = bayes_update_grid(grid, float(data), cfg.obs_var)

        rows.append([float(times[i]), float(weighted_mean(ens)[0]), grid_mean(grid),
                     effective_sample_size(ens.weights)])
        logger.debug(f"t={times[i]:.2f} filter={rows[-1][1]:.4f} optimal={rows[-1][2]:.4f} ess={rows[-1][3]:.1f}")

    series = pd.DataFrame(rows, columns=SERIES_COLUMNS)
    rmse = compute_rmse(series["filter_mean"], series["optimal_mean"])
    summary = {
        "rmse": rmse,
        "reference_seed": int(reference_seed),
        "switch_time": t_switch,
        "reference_switches": t_switch is not None,
        "final_out_of_range_mass": out_of_range_mass(ens, hist_range(cfg)),
    }
    marginals = {
        f"{cfg.filter}_final": marginal_histogram(ens, 0, cfg.hist_bins, hist_range(cfg)),
        "optimal_final": density_histogram(grid, cfg.hist_bins, hist_range(cfg)),
    }
    logger.info(f"doublewell/{cfg.filter}: RMSE to optimal mean {rmse:.4f}")
    return RunReport(EXPERIMENT_DOUBLEWELL, cfg.filter, cfg.seed, series, marginals, summary, cfg.to_dict())


def sine_setup(cfg: ExperimentConfig) -> Tuple[SpectralBasis, DecaySpec]:
    basis = sine_basis(cfg.state_dim)
    return basis, DecaySpec.power_law(basis.mode_count, cfg.lambda_exponent, cfg.kappa_exponent)


def build_indicator_prior(cfg: ExperimentConfig, basis: SpectralBasis, decay: DecaySpec) -> Tuple[WeightedEnsemble, int]:
    """
    Forecast ensemble conditioned on the indicator likelihood.

    Draws large_ensemble_size smooth fields in chunks, keeps those with
    nonzero indicator weight, and resamples ensemble_size of them. An
    attempt with fewer survivors than ensemble_size is repeated on a new
    stream.

    Returns:
        (forecast ensemble, attempts used)

    Raises:
        ExperimentError: If every attempt runs short
    """
    rows = np.stack([point_evaluation_row(basis.mesh, x * np.pi) for x in cfg.indicator_points])
    chunk_count = math.ceil(cfg.large_ensemble_size / cfg.large_ensemble_chunk)
    for attempt in range(cfg.max_prior_attempts):
        stream = RngStream(cfg.seed, STREAM_PRIOR).spawn(attempt)
        kept: List[np.ndarray] = []
        weights: List[np.ndarray] = []
        remaining = cfg.large_ensemble_size
        for c in range(chunk_count):
            size = min(cfg.large_ensemble_chunk, remaining)
            remaining -= size
            members = sample_initial_ensemble(basis, decay, size, stream.spawn(c)).members
            w = indicator_likelihood(members @ rows.T, cfg.indicator_value, cfg.indicator_bands)
            kept.append(members[w > 0])
            weights.append(w[w > 0])
        survivors = sum(k.shape[0] for k in kept)
        if survivors >= cfg.ensemble_size:
            large = WeightedEnsemble(np.concatenate(kept), normalize_weights(np.concatenate(weights)))
            logger.info(f"Indicator prior: {survivors} of {cfg.large_ensemble_size} members survive")
            return multinomial_resample(large, cfg.ensemble_size, stream.spawn(chunk_count)), attempt + 1
        logger.warning(
            f"Indicator prior attempt {attempt + 1}: only {survivors} of "
            f"{cfg.large_ensemble_size} members survive, need {cfg.ensemble_size}"
        )
    raise ExperimentError(
        f"fewer than {cfg.ensemble_size} members with nonzero indicator weight",
        experiment=EXPERIMENT_SINE_BIMODAL,
        stage="prior",
        details=f"{cfg.max_prior_attempts} attempts"
    )


def _sine_marginals(
    cfg: ExperimentConfig,
    basis: SpectralBasis,
    forecast: WeightedEnsemble,
    analysis: WeightedEnsemble
) -> Dict[str, pd.DataFrame]:
    value_range = hist_range(cfg)
    return {
        f"{cfg.filter}_prior": marginal_table(forecast, basis.mesh, cfg.hist_bins, value_range),
        f"{cfg.filter}_posterior": marginal_table(analysis, basis.mesh, cfg.hist_bins, value_range),
    }


def run_sine_bimodal(cfg: ExperimentConfig, prior: Optional[WeightedEnsemble] = None) -> RunReport:
    """
    Point observation at sine_obs_x of fields drawn from an indicator-conditioned prior.

    Args:
        cfg: Run config
        prior: Precomputed forecast ensemble (shared between filters of one seed)
    """
    basis, decay = sine_setup(cfg)
    attempts = 0
    if prior is None:
        prior, attempts = build_indicator_prior(cfg, basis, decay)
    obs = GaussianObservation.point(basis.mesh, cfg.sine_obs_x * np.pi, cfg.sine_bimodal_data, cfg.sine_obs_var)
    analysis = run_analysis(
        cfg.filter, prior, obs,
        AnalysisConfig.from_experiment(cfg, UNorm(basis, decay)),
        RngStream(cfg.seed, STREAM_ANALYSIS)
    )

    marginal_row = point_evaluation_row(basis.mesh, cfg.marginal_x * np.pi)
    summary = {
        "prior_attempts": attempts,
        "band_mass_prior": band_mass(prior.members @ marginal_row, prior.weights, cfg.indicator_bands),
        "band_mass_posterior": band_mass(analysis.members @ marginal_row, analysis.weights, cfg.indicator_bands),
        "posterior_mean_at_obs": float(obs.apply(weighted_mean(analysis)[None, :])[0, 0]),
        "posterior_out_of_range_mass": out_of_range_mass(analysis, hist_range(cfg)),
    }
    series = _single_record(summary["posterior_mean_at_obs"], float("nan"), effective_sample_size(analysis.weights))
    logger.info(f"sine-bimodal/{cfg.filter}: band mass {summary['band_mass_posterior']:.3f} at x={cfg.marginal_x}*pi")
    return RunReport(EXPERIMENT_SINE_BIMODAL, cfg.filter, cfg.seed, series,
                     _sine_marginals(cfg, basis, prior, analysis), summary, cfg.to_dict())


def run_sine_far(cfg: ExperimentConfig) -> RunReport:
    """Point observation far out in the tail of a Gaussian smooth-field prior."""
    basis, decay = sine_setup(cfg)
    prior = sample_initial_ensemble(basis, decay, cfg.ensemble_size, RngStream(cfg.seed, STREAM_PRIOR))
    x_obs = cfg.sine_obs_x * np.pi
    obs = GaussianObservation.point(basis.mesh, x_obs, cfg.sine_far_data, cfg.sine_obs_var)
    analysis = run_analysis(
        cfg.filter, prior, obs,
        AnalysisConfig.from_experiment(cfg, UNorm(basis, decay)),
        RngStream(cfg.seed, STREAM_ANALYSIS)
    )

    prior_var = pointwise_variance(basis, decay, x_obs)
    kalman_mean = prior_var / (prior_var + cfg.sine_obs_var) * cfg.sine_far_data
    summary = {
        "posterior_mean_at_obs": float(obs.apply(weighted_mean(analysis)[None, :])[0, 0]),
        "kalman_mean_at_obs": kalman_mean,
        "prior_var_at_obs": prior_var,
        "posterior_out_of_range_mass": out_of_range_mass(analysis, hist_range(cfg)),
    }
    series = _single_record(summary["posterior_mean_at_obs"], kalman_mean, effective_sample_size(analysis.weights))
    logger.info(
        f"sine-far/{cfg.filter}: posterior mean {summary['posterior_mean_at_obs']:.3f} "
        f"at x={cfg.sine_obs_x}*pi (Kalman {kalman_mean:.3f})"
    )
    return RunReport(EXPERIMENT_SINE_FAR, cfg.filter, cfg.seed, series,
                     _sine_marginals(cfg, basis, prior, analysis), summary, cfg.to_dict())


RUNNERS: Dict[str, Callable[[ExperimentConfig], RunReport]] = {
    EXPERIMENT_BIMODAL: run_bimodal,
    EXPERIMENT_DOUBLEWELL: run_doublewell,
    EXPERIMENT_SINE_BIMODAL: run_sine_bimodal,
    EXPERIMENT_SINE_FAR: run_sine_far,
}


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Run the configured experiment inside its own run context."""
    with run_context(f"{cfg.experiment}-{cfg.filter}-{cfg.seed}"):
        logger.info(f"Starting {cfg.experiment} with filter {cfg.filter}, N={cfg.ensemble_size}, seed={cfg.seed}")
        return RUNNERS[cfg.experiment](cfg)


def _to_builtin(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_report(report: RunReport, out_dir: Union[str, Path]) -> Path:
    """
    Write series.csv, marginal_<tag>.csv and report.json into out_dir.

    Floats are written with 17 significant digits, so read_report returns
    identical values.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.series.to_csv(out / "series.csv", index=False, float_format=CSV_FLOAT_FORMAT, encoding="utf-8")
    for tag, table in report.marginals.items():
        table.to_csv(out / f"marginal_{tag}.csv", index=False, float_format=CSV_FLOAT_FORMAT, encoding="utf-8")
    meta = {
        "experiment": report.experiment,
        "filter": report.filter,
        "seed": report.seed,
        "summary": _to_builtin(report.summary),
        "config": _to_builtin(report.config),
        "marginals": sorted(report.marginals),
    }
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    logger.info(f"Wrote report to {out}")
    return out


def _read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip", encoding="utf-8").astype(float)


def read_report(out_dir: Union[str, Path]) -> RunReport:
    """Parse a directory written by write_report."""
    out = Path(out_dir)
    with open(out / "report.json", "r", encoding="utf-8") as f:
        meta = json.load(f)
    marginals = {tag: _read_csv(out / f"marginal_{tag}.csv") for tag in meta["marginals"]}
    return RunReport(
        experiment=meta["experiment"],
        filter=meta["filter"],
        seed=meta["seed"],
        series=_read_csv(out / "series.csv"),
        marginals=marginals,
        summary=meta["summary"],
        config=meta["config"],
    )


@dataclass
class SweepResult:
    """
    RMSE of every filter over a range of seeds.

    Attributes:
        table: One row per (seed, filter) with its RMSE to the optimal mean
        medians: Median RMSE per filter
        sensitivity: Median RMSE per (kappa, filter); empty unless EnKF-SIS lost
    """
    table: pd.DataFrame
    medians: Dict[str, float]
    sensitivity: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["kappa", "filter", "median_rmse"]))

    @property
    def enkf_sis_best(self) -> bool:
        best = self.medians[FILTER_ENKF_SIS]
        return all(best <= value for value in self.medians.values())


def _sweep_task(cfg: ExperimentConfig) -> Tuple[int, str, float]:
    report = run_experiment(cfg)
    return cfg.seed, cfg.filter, report.summary["rmse"]


def rmse_table(
    cfg: ExperimentConfig,
    filters: Sequence[str] = FILTERS,
    progress_callback: Optional[Callable[[str, int, int], None]] = None
) -> pd.DataFrame:
    """
    Double-well RMSE for each filter and seed, run on cfg.workers threads.

    Rows are ordered by (seed, filter) regardless of completion order.
    """
    tasks = [
        cfg.updated(experiment=EXPERIMENT_DOUBLEWELL, filter=name, seed=seed)
        for seed in range(cfg.seed, cfg.seed + cfg.sweep_seeds)
        for name in filters
    ]
    total = len(tasks)
    if progress_callback:
        progress_callback("Running sweep...", 0, total)

    rows = []
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for i, row in enumerate(pool.map(_sweep_task, tasks)):
            rows.append(row)
            if progress_callback:
                progress_callback(f"Finished run {i + 1}/{total}", i + 1, total)
    return pd.DataFrame(rows, columns=["seed", "filter", "rmse"])


def _medians(table: pd.DataFrame) -> Dict[str, float]:
    return {name: float(value) for name, value in table.groupby("filter", sort=False)["rmse"].median().items()}


def sweep(
    cfg: ExperimentConfig,
    progress_callback: Optional[Callable[[str, int, int], None]] = None
) -> SweepResult:
    """
    Multi-seed comparison of the three filters on the double-well experiment.

    When EnKF-SIS does not have the lowest median RMSE, the comparison is
    repeated over SENSITIVITY_KAPPAS.
    """
    table = rmse_table(cfg, FILTERS, progress_callback)
    result = SweepResult(table=table, medians=_medians(table))
    logger.info("Median RMSE: " + ", ".join(f"{k}={v:.4f}" for k, v in result.medians.items()))
    if result.enkf_sis_best:
        return result

    logger.warning("EnKF-SIS does not have the lowest median RMSE; running kappa sensitivity")
    rows = []
    for kappa in SENSITIVITY_KAPPAS:
        medians = _medians(rmse_table(cfg.updated(kappa=kappa), FILTERS, progress_callback))
        rows.extend((kappa, name, value) for name, value in medians.items())
    result.sensitivity = pd.DataFrame(rows, columns=["kappa", "filter", "median_rmse"])
    return result


def write_sweep(result: SweepResult, cfg: ExperimentConfig, out_dir: Union[str, Path]) -> Path:
    """Write sweep.csv, report.json and, when present, sensitivity.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.table.to_csv(out / "sweep.csv", index=False, float_format=CSV_FLOAT_FORMAT, encoding="utf-8")
    if not result.sensitivity.empty:
        result.sensitivity.to_csv(out / "sensitivity.csv", index=False, float_format=CSV_FLOAT_FORMAT,
                                  encoding="utf-8")
    meta = {
        "experiment": EXPERIMENT_DOUBLEWELL,
        "seeds": list(range(cfg.seed, cfg.seed + cfg.sweep_seeds)),
        "median_rmse": result.medians,
        "enkf_sis_best": result.enkf_sis_best,
        "config": _to_builtin(cfg.to_dict()),
    }
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    logger.info(f"Wrote sweep to {out}")
    return out
