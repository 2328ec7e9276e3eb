"""
Pytest fixtures for nonga tests.
"""

import json
import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


@pytest.fixture
def rng():
    """A fixed random stream."""
    from src.ensemble import RngStream
    return RngStream(seed=1234, stream_id=0)


@pytest.fixture
def scalar_ensemble():
    """Four scalar members with unequal weights."""
    from src.ensemble import WeightedEnsemble
    return WeightedEnsemble(np.array([0.0, 1.0, 3.0, 7.0]), np.array([0.1, 0.2, 0.3, 0.4]))


@pytest.fixture
def small_ensemble():
    """Three members in two dimensions with unequal weights."""
    from src.ensemble import WeightedEnsemble
    return WeightedEnsemble(
        np.array([[1.0, 2.0], [-0.5, 0.3], [2.0, -1.0]]),
        np.array([0.5, 0.3, 0.2])
    )


@pytest.fixture
def scalar_obs():
    """Scalar observation d = 1 with unit variance."""
    from src.ensemble import GaussianObservation
    return GaussianObservation.scalar(1.0, 1.0)


@pytest.fixture
def small_basis():
    """Sine basis on 63 interior nodes."""
    from src.spectral import sine_basis
    return sine_basis(63)


@pytest.fixture
def fast_config():
    """Experiment config small enough for unit tests."""
    from src.config import ExperimentConfig
    return ExperimentConfig().updated(
        ensemble_size=30,
        t_end=0.4,
        obs_interval=0.1,
        grid_lo=-2.0,
        grid_hi=2.0,
        grid_du=0.02,
        state_dim=40,
        large_ensemble_size=4000,
        large_ensemble_chunk=1000,
        reference_seed=0,
        sweep_seeds=2,
    )


@pytest.fixture
def temp_config(tmp_path):
    """Create a temporary application config file."""
    config_content = """
app:
  name: "Test App"
  version: "1.0.0"

logging:
  level: "DEBUG"
  file: ""

experiment:
  ensemble_size: 50
  kappa: 0.8
"""
    config_file = tmp_path / "config.yaml"
    config_file.write_text(config_content)
    return str(config_file)


@pytest.fixture
def run_config_file(tmp_path):
    """Create a flat JSON run config."""
    def _write(values):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(values))
        return str(path)
    return _write
