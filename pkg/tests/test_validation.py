"""
Tests for the self-check suite.
"""

import numpy as np
import pandas as pd
import pytest

from src.config import FILTERS, ExperimentConfig
from src.validation import (
    CheckResult,
    check_bimodal_modes,
    check_conjugate_grid,
    check_corrector_degeneration,
    check_covariance_oracle,
    check_determinism,
    check_fokker_planck_stationary,
    check_kalman_oracle,
    check_sine_far,
    hard_failures,
    run_validation,
)


class TestOracleChecks:
    """The exact-oracle checks pass on a correct implementation."""

    def test_kalman_oracle(self):
        result = check_kalman_oracle(seed=0)
        assert result.passed, result

    def test_covariance_oracle(self):
        result = check_covariance_oracle(seed=0, instances=50)
        assert result.passed, result

    def test_corrector_degeneration(self):
        result = check_corrector_degeneration(seed=0)
        assert result.passed, result

    def test_fokker_planck_stationary(self):
        result = check_fokker_planck_stationary()
        assert result.passed, result

    def test_conjugate_grid(self):
        result = check_conjugate_grid()
        assert result.passed, result
        assert result.value < 1e-4


class TestExperimentChecks:
    """Experiment checks on small configs report well-formed results."""

    def test_bimodal_modes_layout(self, fast_config):
        results = check_bimodal_modes(fast_config, seeds=2)
        assert [r.check for r in results] == [f"bimodal_modes_{name}" for name in FILTERS]
        assert all(0.0 <= r.value <= 1.0 for r in results)

    def test_bimodal_modes_pass_at_defaults(self):
        results = check_bimodal_modes(ExperimentConfig(), seeds=20)
        assert [r for r in results if not r.passed] == []

    def test_sine_far_prior_spread(self, fast_config):
        results = check_sine_far(fast_config, seeds=2)
        assert len(results) == 4
        assert results[-1].check == "sine_far_prior_std"
        assert results[-1].passed

    def test_determinism(self, fast_config):
        result = check_determinism(fast_config)
        assert result.passed
        assert result.value == 0.0


class TestCheckResult:
    """Tests for CheckResult."""

    def test_numpy_values_become_builtins(self):
        result = CheckResult("x", np.float64(0.5), 1, np.bool_(True))
        assert type(result.passed) is bool
        assert type(result.value) is float
        assert type(result.threshold) is float


def _stub(name, passed, soft=False):
    return CheckResult(name, 0.0, 0.0, passed, soft)


@pytest.fixture
def stubbed_checks(mocker):
    """Replace every check with a constant result."""
    mocker.patch("src.validation.check_kalman_oracle", return_value=_stub("kalman_oracle", True))
    mocker.patch("src.validation.check_covariance_oracle", return_value=_stub("covariance_oracle", True))
    mocker.patch("src.validation.check_corrector_degeneration", return_value=_stub("corrector_degeneration", True))
    mocker.patch("src.validation.check_fokker_planck_stationary", return_value=_stub("fokker_planck_stationary", True))
    mocker.patch("src.validation.check_conjugate_grid", return_value=_stub("conjugate_grid", True))
    mocker.patch("src.validation.check_bimodal_modes", return_value=[_stub("bimodal_modes_enkf", True)])
    mocker.patch("src.validation.check_doublewell_comparison",
                 return_value=[_stub("doublewell_enkf-sis_vs_sis", False, soft=True)])
    mocker.patch("src.validation.check_sine_far", return_value=[_stub("sine_far_enkf", True)])
    mocker.patch("src.validation.check_sine_bimodal", return_value=_stub("sine_bimodal_band_mass", True))
    return mocker.patch("src.validation.check_determinism", return_value=_stub("determinism", True))


class TestRunValidation:
    """Tests for run_validation and hard_failures."""

    def test_collects_all_checks(self, fast_config, stubbed_checks, tmp_path):
        table = run_validation(fast_config, tmp_path)
        assert list(table.columns) == ["check", "value", "threshold", "passed", "soft"]
        assert len(table) == 10
        written = pd.read_csv(tmp_path / "validation.csv")
        assert written["check"].tolist() == table["check"].tolist()

    def test_soft_failure_is_not_hard(self, fast_config, stubbed_checks):
        assert hard_failures(run_validation(fast_config)) == []

    def test_hard_failure_reported(self, fast_config, stubbed_checks):
        stubbed_checks.return_value = _stub("determinism", False)
        assert hard_failures(run_validation(fast_config)) == ["determinism"]

    def test_progress_reported(self, fast_config, stubbed_checks):
        calls = []
        run_validation(fast_config, progress_callback=lambda status, i, n: calls.append((i, n)))
        assert calls[0] == (0, 10)
        assert calls[-1] == (9, 10)
