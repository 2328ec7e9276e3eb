"""
Tests for the experiment harness: scoring helpers, experiment runs,
report files and sweeps.
"""

import json
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from src.config import FILTER_ENKF, FILTER_ENKF_SIS, FILTER_SIS, FILTERS
from src.ensemble import (
    RngStream,
    WeightedEnsemble,
    effective_sample_size,
    normalize_weights,
    point_evaluation_row,
)
from src.exceptions import ExperimentError, ValidationError
from src.harness import (
    FAR_HIST_RANGE,
    MARGINAL_COLUMNS,
    SCALAR_HIST_RANGE,
    SERIES_COLUMNS,
    STREAM_PRIOR,
    band_mass,
    bimodal_prior_weight,
    build_indicator_prior,
    compute_rmse,
    count_modes,
    density_histogram,
    hist_range,
    indicator_likelihood,
    marginal_histogram,
    marginal_table,
    observation_times,
    out_of_range_mass,
    read_report,
    rmse_table,
    run_bimodal,
    run_doublewell,
    run_experiment,
    run_sine_bimodal,
    run_sine_far,
    sine_setup,
    sweep,
    write_report,
    write_sweep,
)
from src.logging_config import get_run_id
from src.oracle import DensityGrid


def bump(center, width, bins=50, height=1.0):
    i = np.arange(bins)
    return height * np.exp(-((i - center) / width) ** 2)


class TestMarginalHistogram:
    """Tests for marginal_histogram and marginal_table."""

    def test_hand_binned(self):
        ens = WeightedEnsemble.uniform([-3.5, -0.5, 0.2, 0.4, 5.0])
        table = marginal_histogram(ens, bins=4, value_range=(-4.0, 4.0))
        assert list(table.columns) == MARGINAL_COLUMNS
        np.testing.assert_allclose(table["mass"], [0.2, 0.2, 0.4, 0.2])
        np.testing.assert_allclose(table["bin_lo"], [-4.0, -2.0, 0.0, 2.0])
        np.testing.assert_allclose(table["bin_hi"], [-2.0, 0.0, 2.0, 4.0])

    def test_weighted(self):
        ens = WeightedEnsemble(np.array([-1.0, 1.0]), np.array([0.25, 0.75]))
        table = marginal_histogram(ens, bins=2, value_range=(-2.0, 2.0))
        np.testing.assert_allclose(table["mass"], [0.25, 0.75])

    def test_equal_members_fill_one_bin(self):
        ens = WeightedEnsemble.uniform(np.ones(10))
        mass = marginal_histogram(ens).mass.to_numpy()
        assert np.count_nonzero(mass) == 1
        assert mass.max() == pytest.approx(1.0)

    def test_zero_bins_rejected(self, scalar_ensemble):
        with pytest.raises(ValidationError):
            marginal_histogram(scalar_ensemble, bins=0)

    def test_out_of_range_mass(self):
        ens = WeightedEnsemble.uniform([-3.5, -0.5, 0.2, 0.4, 5.0])
        assert out_of_range_mass(ens, (-4.0, 4.0)) == pytest.approx(0.2)
        assert out_of_range_mass(ens, (-5.0, 5.0)) == 0.0

    def test_out_of_range_mass_takes_worst_component(self, small_ensemble):
        # second component: 2.0 and 0.3 inside, -1.0 (weight 0.2) below
        assert out_of_range_mass(small_ensemble, (-0.5, 2.5)) == pytest.approx(0.2)

    def test_table_over_mesh(self, small_ensemble):
        table = marginal_table(small_ensemble, np.array([0.1, 0.2]), 4, (-3.0, 3.0))
        assert len(table) == 8
        np.testing.assert_allclose(table["x"].unique(), [0.1, 0.2])
        np.testing.assert_allclose(table.groupby("x")["mass"].sum(), [1.0, 1.0])


class TestDensityHistogram:
    """Tests for density_histogram."""

    def test_symmetric_halves(self):
        table = density_histogram(DensityGrid.gaussian(0.0, 1.0), 2, (-3.0, 3.0))
        np.testing.assert_allclose(table["mass"], [0.5, 0.5], atol=1e-6)

    def test_mass_sums_to_one(self):
        table = density_histogram(DensityGrid.gaussian(0.5, 0.2), 50, SCALAR_HIST_RANGE)
        assert table["mass"].sum() == pytest.approx(1.0)


class TestHistRange:
    """Tests for hist_range."""

    def test_scalar_default(self, fast_config):
        assert hist_range(fast_config) == SCALAR_HIST_RANGE

    def test_far_default(self, fast_config):
        assert hist_range(fast_config.updated(experiment="sine-far")) == FAR_HIST_RANGE

    def test_explicit(self, fast_config):
        assert hist_range(fast_config.updated(hist_lo=-1.0, hist_hi=2.0)) == (-1.0, 2.0)


class TestComputeRmse:
    """Tests for compute_rmse."""

    def test_example(self):
        assert compute_rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))

    def test_identical(self):
        assert compute_rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            compute_rmse([1.0], [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(ValidationError):
            compute_rmse([], [])


class TestCountModes:
    """Tests for count_modes."""

    def test_unimodal(self):
        assert count_modes(bump(25, 5)) == 1

    def test_bimodal(self):
        assert count_modes(bump(12, 3) + bump(37, 3)) == 2

    def test_small_bump_ignored(self):
        assert count_modes(bump(12, 3) + bump(37, 3, height=0.05)) == 1

    def test_edge_bin_counts(self):
        mass = np.zeros(50)
        mass[0] = 1.0
        assert count_modes(mass) == 1

    def test_empty_histogram(self):
        assert count_modes(np.zeros(50)) == 0

    def test_jagged_histogram_smoothed(self):
        mass = bump(25, 6)
        mass[::2] *= 0.8
        assert count_modes(mass) == 1


class TestIndicators:
    """Tests for the prior weight, likelihood and band helpers."""

    def test_bimodal_prior_weight_at_mode(self):
        assert bimodal_prior_weight(1.5) == pytest.approx(1.0)

    def test_bimodal_prior_weight_symmetric(self):
        x = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(bimodal_prior_weight(x), bimodal_prior_weight(-x))

    def test_constant_field_in_band(self):
        np.testing.assert_array_equal(indicator_likelihood(np.array([[1.5, 1.5]])), [0.5])

    def test_zero_field(self):
        np.testing.assert_array_equal(indicator_likelihood(np.array([[0.0, 0.0]])), [0.0])

    def test_one_point_outside(self):
        np.testing.assert_array_equal(indicator_likelihood(np.array([[1.5, 0.5]])), [0.0])

    def test_bands_are_open(self):
        np.testing.assert_array_equal(indicator_likelihood(np.array([[1.0, -2.0]])), [0.0])

    def test_mixed_signs_allowed(self):
        np.testing.assert_array_equal(indicator_likelihood(np.array([[-1.5, 1.5]])), [0.5])

    def test_band_mass(self):
        values = np.array([-1.5, 0.0, 1.5, 2.5])
        assert band_mass(values, np.array([0.1, 0.2, 0.3, 0.4]), ((-2, -1), (1, 2))) == pytest.approx(0.4)


class TestRunBimodal:
    """Tests for the bimodal prior experiment."""

    @pytest.mark.parametrize("filter_name", FILTERS)
    def test_report_layout(self, fast_config, filter_name):
        report = run_bimodal(fast_config.updated(filter=filter_name))
        assert list(report.series.columns) == SERIES_COLUMNS
        assert len(report.series) == 1
        assert set(report.marginals) == {
            f"{filter_name}_prior", f"{filter_name}_posterior", "likelihood", "exact"}
        for table in report.marginals.values():
            assert len(table) == fast_config.hist_bins
            assert table["mass"].sum() == pytest.approx(1.0)
        assert report.summary["smoothing_window"] == 5
        assert 0.0 <= report.summary["posterior_out_of_range_mass"] <= 1.0

    def test_clipped_mass_reported(self, fast_config):
        report = run_bimodal(fast_config.updated(filter=FILTER_SIS, hist_lo=-0.5, hist_hi=0.5))
        assert report.summary["posterior_out_of_range_mass"] > 0.5

    def test_enkf_keeps_prior_weights(self, fast_config):
        enkf = run_bimodal(fast_config.updated(filter=FILTER_ENKF))
        prior_weights = normalize_weights(bimodal_prior_weight(
            np.sqrt(fast_config.bimodal_prior_var)
            * RngStream(fast_config.seed, STREAM_PRIOR).generator().standard_normal(fast_config.ensemble_size)))
        assert enkf.series["ess"].iloc[0] == pytest.approx(effective_sample_size(prior_weights))

    def test_exact_posterior_is_bimodal(self, fast_config):
        report = run_bimodal(fast_config)
        assert count_modes(report.marginals["exact"]["mass"].to_numpy()) == 2

    def test_exact_mean_favors_mode_nearer_data(self, fast_config):
        report = run_bimodal(fast_config)
        assert report.series["optimal_mean"].iloc[0] > 0.0


class TestRunDoublewell:
    """Tests for the double-well twin experiment."""

    def test_observation_times(self, fast_config):
        np.testing.assert_allclose(observation_times(fast_config), [0.1, 0.2, 0.3, 0.4])

    @pytest.mark.parametrize("filter_name", FILTERS)
    def test_report_layout(self, fast_config, filter_name):
        report = run_doublewell(fast_config.updated(experiment="doublewell", filter=filter_name))
        assert len(report.series) == 4
        np.testing.assert_allclose(report.series["time"], [0.1, 0.2, 0.3, 0.4])
        assert np.isfinite(report.summary["rmse"])
        assert report.summary["reference_seed"] == 0
        assert set(report.marginals) == {f"{filter_name}_final", "optimal_final"}

    def test_enkf_ess_is_ensemble_size(self, fast_config):
        report = run_doublewell(fast_config.updated(experiment="doublewell", filter=FILTER_ENKF))
        np.testing.assert_allclose(report.series["ess"], fast_config.ensemble_size)

    @pytest.mark.parametrize("filter_name", FILTERS)
    def test_no_noise_flat_likelihood_stays_at_well(self, fast_config, filter_name):
        cfg = fast_config.updated(
            experiment="doublewell", filter=filter_name, kappa=0.0, obs_var=1e12, init_var=0.0)
        report = run_doublewell(cfg)
        np.testing.assert_allclose(report.series["optimal_mean"], 1.0, atol=1e-9)
        np.testing.assert_allclose(report.series["filter_mean"], 1.0, atol=1e-9)
        assert report.summary["rmse"] < 1e-9
        assert report.summary["reference_switches"] is False

    def test_same_seed_same_series(self, fast_config):
        cfg = fast_config.updated(experiment="doublewell", filter=FILTER_ENKF_SIS, seed=5)
        pd.testing.assert_frame_equal(run_doublewell(cfg).series, run_doublewell(cfg).series)


class TestSineExperiments:
    """Tests for the sine-basis experiments."""

    def test_indicator_prior(self, fast_config):
        basis, decay = sine_setup(fast_config)
        prior, attempts = build_indicator_prior(fast_config, basis, decay)
        assert prior.size == fast_config.ensemble_size
        assert attempts == 1
        rows = np.stack([point_evaluation_row(basis.mesh, x * np.pi) for x in (0.25, 0.75)])
        assert np.all(indicator_likelihood(prior.members @ rows.T) == 0.5)

    def test_indicator_prior_exhausted(self, fast_config):
        cfg = fast_config.updated(
            indicator_bands=[[50.0, 60.0]], max_prior_attempts=2,
            large_ensemble_size=200, large_ensemble_chunk=100)
        basis, decay = sine_setup(cfg)
        with pytest.raises(ExperimentError) as exc_info:
            build_indicator_prior(cfg, basis, decay)
        assert exc_info.value.stage == "prior"

    def test_sine_bimodal_report(self, fast_config):
        cfg = fast_config.updated(experiment="sine-bimodal", filter=FILTER_ENKF_SIS)
        report = run_sine_bimodal(cfg)
        assert report.summary["prior_attempts"] == 1
        assert report.summary["band_mass_prior"] == pytest.approx(1.0)
        assert 0.0 <= report.summary["band_mass_posterior"] <= 1.0 + 1e-12
        assert len(report.marginals[f"{FILTER_ENKF_SIS}_posterior"]) == cfg.state_dim * cfg.hist_bins

    def test_shared_prior(self, fast_config):
        cfg = fast_config.updated(experiment="sine-bimodal", filter=FILTER_SIS)
        basis, decay = sine_setup(cfg)
        prior, _ = build_indicator_prior(cfg, basis, decay)
        report = run_sine_bimodal(cfg, prior)
        assert report.summary["prior_attempts"] == 0
        np.testing.assert_array_equal(
            report.marginals[f"{FILTER_SIS}_prior"]["mass"],
            run_sine_bimodal(cfg, prior).marginals[f"{FILTER_SIS}_prior"]["mass"])

    @pytest.mark.parametrize("filter_name", FILTERS)
    def test_sine_far_report(self, fast_config, filter_name):
        cfg = fast_config.updated(experiment="sine-far", filter=filter_name)
        summary = run_sine_far(cfg).summary
        v = summary["prior_var_at_obs"]
        assert summary["kalman_mean_at_obs"] == pytest.approx(v / (v + cfg.sine_obs_var) * cfg.sine_far_data)
        assert np.isfinite(summary["posterior_mean_at_obs"])

    def test_sis_cannot_leave_prior_support(self, fast_config):
        cfg = fast_config.updated(experiment="sine-far", filter=FILTER_SIS)
        report = run_sine_far(cfg)
        assert report.summary["posterior_mean_at_obs"] < cfg.sine_far_data


class TestRunExperiment:
    """Tests for run_experiment dispatch."""

    def test_dispatch(self, fast_config):
        report = run_experiment(fast_config.updated(experiment="bimodal", filter=FILTER_SIS))
        assert report.experiment == "bimodal"
        assert report.filter == FILTER_SIS
        assert report.config["ensemble_size"] == fast_config.ensemble_size

    def test_run_id_restored(self, fast_config):
        before = get_run_id()
        run_experiment(fast_config)
        assert get_run_id() == before


class TestReportFiles:
    """Tests for write_report and read_report."""

    def test_round_trip(self, fast_config, tmp_path):
        report = run_bimodal(fast_config)
        write_report(report, tmp_path / "out")
        loaded = read_report(tmp_path / "out")
        assert loaded.experiment == report.experiment
        assert loaded.filter == report.filter
        assert loaded.seed == report.seed
        assert loaded.summary == report.summary
        assert loaded.config == report.config
        pd.testing.assert_frame_equal(loaded.series, report.series)
        assert set(loaded.marginals) == set(report.marginals)
        for tag, table in report.marginals.items():
            pd.testing.assert_frame_equal(loaded.marginals[tag], table)

    def test_files_written(self, fast_config, tmp_path):
        report = run_bimodal(fast_config.updated(filter=FILTER_ENKF))
        write_report(report, tmp_path)
        assert (tmp_path / "series.csv").exists()
        assert (tmp_path / "marginal_enkf_posterior.csv").exists()
        meta = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert meta["marginals"] == sorted(report.marginals)


def fake_run(rmse_by_filter):
    """Stand-in for run_experiment returning a fixed RMSE per filter and seed."""
    def _run(cfg):
        return SimpleNamespace(summary={"rmse": rmse_by_filter[cfg.filter] + 0.01 * cfg.seed})
    return _run


class TestSweep:
    """Tests for rmse_table, sweep and write_sweep."""

    def test_rows_ordered_by_seed_and_filter(self, fast_config, mocker):
        mocker.patch("src.harness.run_experiment",
                     side_effect=fake_run({FILTER_ENKF: 0.5, FILTER_SIS: 0.4, FILTER_ENKF_SIS: 0.1}))
        table = rmse_table(fast_config.updated(workers=3, seed=2))
        assert table["seed"].tolist() == [2, 2, 2, 3, 3, 3]
        assert table["filter"].tolist() == list(FILTERS) * 2
        np.testing.assert_allclose(table["rmse"], [0.52, 0.42, 0.12, 0.53, 0.43, 0.13])

    def test_progress_reported(self, fast_config, mocker):
        mocker.patch("src.harness.run_experiment",
                     side_effect=fake_run({FILTER_ENKF: 0.5, FILTER_SIS: 0.4, FILTER_ENKF_SIS: 0.1}))
        calls = []
        rmse_table(fast_config, progress_callback=lambda status, i, n: calls.append((i, n)))
        assert calls[0] == (0, 6)
        assert calls[-1] == (6, 6)

    def test_best_filter_skips_sensitivity(self, fast_config, mocker):
        run = mocker.patch("src.harness.run_experiment",
                           side_effect=fake_run({FILTER_ENKF: 0.5, FILTER_SIS: 0.4, FILTER_ENKF_SIS: 0.1}))
        result = sweep(fast_config)
        assert result.enkf_sis_best
        assert result.sensitivity.empty
        assert result.medians[FILTER_ENKF_SIS] == pytest.approx(0.105)
        assert run.call_count == 6

    def test_losing_filter_runs_sensitivity(self, fast_config, mocker):
        run = mocker.patch("src.harness.run_experiment",
                           side_effect=fake_run({FILTER_ENKF: 0.5, FILTER_SIS: 0.4, FILTER_ENKF_SIS: 0.9}))
        result = sweep(fast_config)
        assert not result.enkf_sis_best
        assert len(result.sensitivity) == 9
        assert sorted(result.sensitivity["kappa"].unique()) == [0.75, 1.0, 1.25]
        assert run.call_count == 24

    def test_write_sweep(self, fast_config, mocker, tmp_path):
        mocker.patch("src.harness.run_experiment",
                     side_effect=fake_run({FILTER_ENKF: 0.5, FILTER_SIS: 0.4, FILTER_ENKF_SIS: 0.9}))
        result = sweep(fast_config)
        write_sweep(result, fast_config, tmp_path)
        assert (tmp_path / "sweep.csv").exists()
        assert (tmp_path / "sensitivity.csv").exists()
        meta = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert meta["seeds"] == [0, 1]
        assert meta["enkf_sis_best"] is False

    def test_real_sweep_deterministic_across_workers(self, fast_config):
        cfg = fast_config.updated(t_end=0.2, sweep_seeds=2)
        single = rmse_table(cfg.updated(workers=1))
        threaded = rmse_table(cfg.updated(workers=2))
        pd.testing.assert_frame_equal(single, threaded)
