"""
Configuration management for nonga.

Provides centralized configuration with:
- YAML file loading
- Environment variable overrides
- Flat run-config files (JSON or YAML) with unknown-key rejection
- Validation
- Sensible defaults
"""

import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import yaml

from .exceptions import ConfigurationError
from .validators import validate_choice, validate_positive

# Experiments and filters understood by the harness
EXPERIMENT_BIMODAL = "bimodal"
EXPERIMENT_DOUBLEWELL = "doublewell"
EXPERIMENT_SINE_BIMODAL = "sine-bimodal"
EXPERIMENT_SINE_FAR = "sine-far"
EXPERIMENTS = (
    EXPERIMENT_BIMODAL,
    EXPERIMENT_DOUBLEWELL,
    EXPERIMENT_SINE_BIMODAL,
    EXPERIMENT_SINE_FAR,
)

FILTER_ENKF = "enkf"
FILTER_SIS = "sis"
FILTER_ENKF_SIS = "enkf-sis"
FILTERS = (FILTER_ENKF, FILTER_SIS, FILTER_ENKF_SIS)

FALLBACK_ERROR = "error"
FALLBACK_LIKELIHOOD_ONLY = "likelihood_only"

NOISE_EULER_MARUYAMA = "euler_maruyama"
NOISE_LITERAL = "literal"

FP_SCHEME_EXPONENTIAL = "exponential"
FP_SCHEME_UPWIND = "upwind"


# Default configuration values
DEFAULTS: Dict[str, Any] = {
    "app": {
        "name": "nonga",
        "version": "1.0.0",
    },
    "logging": {
        "level": "INFO",
        "file": "logs/nonga.log",
        "max_bytes": 10485760,
        "backup_count": 5,
        "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    },
    "experiment": {},
}


@dataclass
class AppConfig:
    """Application metadata configuration."""
    name: str = "nonga"
    version: str = "1.0.0"


@dataclass
class LoggingConfig:
    """Logging configuration."""
    level: str = "INFO"
    file: str = "logs/nonga.log"
    max_bytes: int = 10485760
    backup_count: int = 5
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass
class ExperimentConfig:
    """
    Flat run configuration shared by every experiment.

    Every field is a config key; run files may set any subset of them.
    Normal laws are parameterized by variance throughout.
    """
    experiment: str = EXPERIMENT_BIMODAL
    filter: str = FILTER_ENKF_SIS
    ensemble_size: int = 100
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1

    # analysis
    bandwidth_rank: Optional[int] = None
    knn_include_self: bool = False
    degenerate_fallback: str = FALLBACK_LIKELIHOOD_ONLY
    numerator_weight_index: str = "ell"
    ess_resample_threshold: float = 0.0

    # bimodal prior experiment
    bimodal_prior_var: float = 5.0
    bimodal_prior_scale: str = "variance"
    bimodal_mode_center: float = 1.5
    bimodal_mode_sharpness: float = 5.0
    bimodal_data: float = 0.1
    bimodal_obs_var: float = 0.5

    # double-well model
    kappa: float = 1.0
    dt: float = 0.01
    t_end: float = 2.0
    obs_interval: float = 0.1
    obs_var: float = 0.1
    noise_convention: str = NOISE_EULER_MARUYAMA
    reference_seed: Optional[int] = None
    reference_u0: float = 1.0
    switch_target_time: float = 1.3
    switch_tolerance: float = 0.3
    reference_search_limit: int = 500
    init_mean: float = 1.0
    init_var: float = 0.04

    # Fokker-Planck grid
    grid_lo: float = -3.0
    grid_hi: float = 3.0
    grid_du: float = 0.01
    fp_scheme: str = FP_SCHEME_EXPONENTIAL

    # sine-basis experiments
    state_dim: int = 500
    lambda_exponent: float = 3.0
    kappa_exponent: float = 2.0
    large_ensemble_size: int = 50000
    large_ensemble_chunk: int = 5000
    indicator_points: List[float] = field(default_factory=lambda: [0.25, 0.75])
    indicator_value: float = 0.5
    indicator_bands: List[List[float]] = field(default_factory=lambda: [[-2.0, -1.0], [1.0, 2.0]])
    max_prior_attempts: int = 5
    sine_obs_x: float = 0.5
    sine_bimodal_data: float = 0.1
    sine_far_data: float = 7.0
    sine_obs_var: float = 1.0
    marginal_x: float = 0.25

    # output
    hist_bins: int = 50
    hist_lo: Optional[float] = None
    hist_hi: Optional[float] = None
    smoothing_window: int = 5
    mode_prominence: float = 0.2
    sweep_seeds: int = 10

    @classmethod
    def keys(cls) -> List[str]:
        """All accepted config keys."""
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ExperimentConfig":
        """
        Build a validated config from a flat mapping.

        Raises:
            ConfigurationError: On unknown keys or invalid values
        """
        return cls().updated(**dict(mapping))

    def updated(self, **overrides: Any) -> "ExperimentConfig":
        """Return a validated copy with overrides applied."""
        unknown = sorted(set(overrides) - set(self.keys()))
        if unknown:
            raise ConfigurationError(
                "Unknown config keys",
                setting=", ".join(unknown),
                details=f"Accepted keys: {', '.join(self.keys())}"
            )
        cfg = replace(self, **overrides)
        cfg.validate()
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def effective_bandwidth_rank(self) -> int:
        """bandwidth_rank, defaulting to floor(sqrt(N))."""
        if self.bandwidth_rank is not None:
            return self.bandwidth_rank
        return max(1, math.isqrt(self.ensemble_size))

    def validate(self) -> None:
        """
        Validate all settings.

        Raises:
            ConfigurationError: If any value is out of range
        """
        validate_choice(self.experiment, EXPERIMENTS, "experiment")
        validate_choice(self.filter, FILTERS, "filter")
        validate_choice(self.degenerate_fallback, (FALLBACK_ERROR, FALLBACK_LIKELIHOOD_ONLY), "degenerate_fallback")
        validate_choice(self.numerator_weight_index, ("ell", "k"), "numerator_weight_index")
        validate_choice(self.bimodal_prior_scale, ("variance", "std"), "bimodal_prior_scale")
        validate_choice(self.noise_convention, (NOISE_EULER_MARUYAMA, NOISE_LITERAL), "noise_convention")
        validate_choice(self.fp_scheme, (FP_SCHEME_EXPONENTIAL, FP_SCHEME_UPWIND), "fp_scheme")

        for name in ("ensemble_size", "workers", "state_dim", "large_ensemble_size",
                     "large_ensemble_chunk", "hist_bins", "smoothing_window",
                     "sweep_seeds", "max_prior_attempts", "reference_search_limit"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigurationError("Must be an integer", setting=name, details=f"got {value!r}")
            validate_positive(value, name)
        if self.ensemble_size < 2:
            raise ConfigurationError("Must be at least 2", setting="ensemble_size")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError("Must be a nonnegative integer", setting="seed")
        if self.reference_seed is not None and (not isinstance(self.reference_seed, int) or self.reference_seed < 0):
            raise ConfigurationError("Must be a nonnegative integer or null", setting="reference_seed")

        rank = self.effective_bandwidth_rank
        upper = self.ensemble_size if self.knn_include_self else self.ensemble_size - 1
        if not isinstance(rank, int) or isinstance(rank, bool) or not 1 <= rank <= upper:
            raise ConfigurationError(
                f"Must satisfy 1 <= bandwidth_rank <= {upper} for N={self.ensemble_size}",
                setting="bandwidth_rank"
            )

        for name in ("bimodal_prior_var", "bimodal_mode_sharpness", "bimodal_obs_var",
                     "dt", "t_end", "obs_interval", "obs_var", "grid_du",
                     "lambda_exponent", "kappa_exponent", "sine_obs_var",
                     "indicator_value", "mode_prominence"):
            validate_positive(getattr(self, name), name)
        validate_positive(self.dt, "dt", upper=0.01)
        validate_positive(self.kappa, "kappa", allow_zero=True)
        validate_positive(self.init_var, "init_var", allow_zero=True)
        validate_positive(self.ess_resample_threshold, "ess_resample_threshold", allow_zero=True, upper=1.0)
        validate_positive(self.switch_tolerance, "switch_tolerance")

        steps = self.obs_interval / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError(
                "Must be a multiple of dt",
                setting="obs_interval",
                details=f"obs_interval={self.obs_interval}, dt={self.dt}"
            )
        if self.obs_interval > self.t_end:
            raise ConfigurationError("Must not exceed t_end", setting="obs_interval")
        if self.grid_lo >= self.grid_hi:
            raise ConfigurationError("grid_lo must be below grid_hi", setting="grid_lo")
        if not self.grid_lo <= self.init_mean <= self.grid_hi:
            raise ConfigurationError("Must lie inside the density grid", setting="init_mean")
        if (self.hist_lo is None) != (self.hist_hi is None):
            raise ConfigurationError("hist_lo and hist_hi must be set together", setting="hist_lo")
        if self.hist_lo is not None and self.hist_lo >= self.hist_hi:
            raise ConfigurationError("hist_lo must be below hist_hi", setting="hist_lo")

        for name in ("sine_obs_x", "marginal_x"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigurationError("Must lie strictly between 0 and 1 (multiples of pi)", setting=name)
        if not self.indicator_points or any(not 0.0 < x < 1.0 for x in self.indicator_points):
            raise ConfigurationError("Points must lie strictly between 0 and 1 (multiples of pi)",
                                     setting="indicator_points")
        for band in self.indicator_bands:
            if len(band) != 2 or band[0] >= band[1]:
                raise ConfigurationError("Each band must be [lo, hi] with lo < hi", setting="indicator_bands")


class Config:
    """
    Central configuration manager.

    Loads configuration from:
    1. Default values
    2. YAML config file (if exists)
    3. Environment variables (override)

    Environment variable format: NONGA_SECTION_KEY
    Example: NONGA_EXPERIMENT_KAPPA=0.8

    Usage:
        config = Config()  # Uses default config path
        config = Config("path/to/config.yaml")

        # Access settings
        print(config.logging.level)
        print(config.experiment.ensemble_size)
    """

    ENV_PREFIX = "NONGA"

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize configuration.

        Args:
            config_path: Path to YAML config file. If None, looks for
                        'config.yaml' in the project root.
        """
        self._raw_config = self._load_config(config_path)
        self._apply_env_overrides()
        self._validate()

        # Create typed config objects
        self.app = AppConfig(**self._raw_config.get("app", {}))
        self.logging = LoggingConfig(**self._raw_config.get("logging", {}))
        self.experiment = ExperimentConfig.from_mapping(self._raw_config.get("experiment", {}))

    def _load_config(self, config_path: Optional[str]) -> Dict[str, Any]:
        """Load configuration from YAML file with defaults."""
        config = self._deep_copy(DEFAULTS)

        if config_path is None:
            # Look for config.yaml in project root
            project_root = Path(__file__).parent.parent
            config_path = project_root / "config.yaml"
        else:
            config_path = Path(config_path)

        if config_path.exists():
            try:
                with open(config_path, "r", encoding="utf-8") as f:
                    yaml_config = yaml.safe_load(f) or {}
                config = self._deep_merge(config, yaml_config)
            except yaml.YAMLError as e:
                raise ConfigurationError(
                    "Invalid YAML syntax in config file",
                    setting=str(config_path),
                    details=str(e)
                )
            except IOError as e:
                raise ConfigurationError(
                    "Cannot read config file",
                    setting=str(config_path),
                    details=str(e)
                )

        return config

    def _apply_env_overrides(self) -> None:
        """Apply environment variable overrides."""
        defaults = ExperimentConfig().to_dict()
        for section, settings in self._raw_config.items():
            if not isinstance(settings, dict):
                continue
            keys = set(settings)
            if section == "experiment":
                keys |= set(defaults)
            for key in keys:
                env_key = f"{self.ENV_PREFIX}_{section.upper()}_{key.upper()}"
                env_value = os.environ.get(env_key)
                if env_value is not None:
                    current = settings.get(key, defaults.get(key))
                    self._raw_config[section][key] = self._convert_type(
                        env_value, type(current)
                    )

    def _convert_type(self, value: str, target_type: type) -> Any:
        """Convert string value to target type."""
        if target_type == bool:
            return value.lower() in ("true", "1", "yes", "on")
        elif target_type == int:
            return int(value)
        elif target_type == float:
            return float(value)
        elif target_type in (list, type(None)):
            # YAML literal, e.g. "[0.25, 0.75]" or "42"
            return yaml.safe_load(value)
        return value

    def _validate(self) -> None:
        """Validate configuration values."""
        logging_config = self._raw_config.get("logging", {})
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if str(logging_config.get("level", "INFO")).upper() not in valid_levels:
            raise ConfigurationError(
                f"Must be one of: {', '.join(valid_levels)}",
                setting="logging.level"
            )
        if not isinstance(self._raw_config.get("experiment", {}), dict):
            raise ConfigurationError("Must be a mapping", setting="experiment")

    @staticmethod
    def _deep_copy(d: Dict[str, Any]) -> Dict[str, Any]:
        """Create a deep copy of a dictionary."""
        result = {}
        for key, value in d.items():
            if isinstance(value, dict):
                result[key] = Config._deep_copy(value)
            elif isinstance(value, list):
                result[key] = value.copy()
            else:
                result[key] = value
        return result

    @staticmethod
    def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        """Deep merge two dictionaries, with override taking precedence."""
        result = Config._deep_copy(base)
        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = Config._deep_merge(result[key], value)
            else:
                result[key] = value
        return result


def read_run_config(path: str) -> Dict[str, Any]:
    """
    Read a flat key/value run config (JSON, or YAML).

    Raises:
        ConfigurationError: If the file is unreadable or not a flat mapping
    """
    run_path = Path(path)
    try:
        with open(run_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError("Invalid JSON/YAML in run config", setting=str(run_path), details=str(e))
    except IOError as e:
        raise ConfigurationError("Cannot read run config", setting=str(run_path), details=str(e))

    if not isinstance(data, dict):
        raise ConfigurationError("Run config must be a key/value mapping", setting=str(run_path))
    nested = [key for key, value in data.items() if isinstance(value, dict)]
    if nested:
        raise ConfigurationError("Run config must be flat", setting=", ".join(nested))
    return data


def load_experiment_config(
    run_config_path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    base: Optional[ExperimentConfig] = None
) -> ExperimentConfig:
    """
    Resolve the config for one run.

    Precedence: base (config.yaml + env) < run config file < overrides.
    Overrides with value None are ignored so CLI flags can be passed through.
    """
    cfg = base if base is not None else get_config().experiment
    if run_config_path:
        cfg = cfg.updated(**read_run_config(run_config_path))
    if overrides:
        cfg = cfg.updated(**{k: v for k, v in overrides.items() if v is not None})
    return cfg


# Global config instance (lazy loaded)
_config: Optional[Config] = None


def get_config(config_path: Optional[str] = None) -> Config:
    """
    Get the global configuration instance.

    Creates the instance on first call. Subsequent calls return
    the same instance unless a different config_path is provided.

    Args:
        config_path: Optional path to config file. Only used on first call
                    or if explicitly providing a new path.

    Returns:
        Config instance
    """
    global _config
    if _config is None or config_path is not None:
        _config = Config(config_path)
    return _config
