"""
Tests for the sine basis, field sampling and the U-norm.
"""

import numpy as np
import pytest

from src.ensemble import RngStream
from src.exceptions import ValidationError
from src.spectral import (
    DecaySpec,
    EuclideanNorm,
    UNorm,
    analyze,
    pointwise_variance,
    sample_initial_ensemble,
    sine_basis,
    synthesize,
    u_norm,
)


class TestSineBasis:
    """Tests for sine_basis."""

    def test_mesh_is_interior(self):
        basis = sine_basis(9)
        np.testing.assert_allclose(basis.mesh, np.pi * np.arange(1, 10) / 10)
        np.testing.assert_allclose(basis.quadrature, np.full(9, np.pi / 10))

    def test_gram_is_identity(self, small_basis):
        np.testing.assert_allclose(small_basis.gram(), np.eye(63), atol=1e-12)

    def test_gram_identity_at_full_size(self):
        basis = sine_basis(500)
        np.testing.assert_allclose(basis.gram(), np.eye(500), atol=1e-10)

    def test_truncated_modes(self):
        basis = sine_basis(20, mode_count=5)
        assert basis.basis_matrix.shape == (20, 5)

    def test_invalid_mode_count(self):
        with pytest.raises(ValidationError):
            sine_basis(10, mode_count=11)

    def test_node_index(self, small_basis):
        assert small_basis.node_index(np.pi / 2) == 31


class TestAnalyze:
    """Tests for analyze and synthesize."""

    def test_single_mode(self, small_basis):
        c = analyze(small_basis, small_basis.basis_matrix[:, 1])
        expected = np.zeros(63)
        expected[1] = 1.0
        np.testing.assert_allclose(c, expected, atol=1e-12)

    def test_zero(self, small_basis):
        np.testing.assert_array_equal(analyze(small_basis, np.zeros(63)), np.zeros(63))

    def test_linear_combination(self, small_basis):
        u = 2 * small_basis.basis_matrix[:, 0] - 3 * small_basis.basis_matrix[:, 3]
        c = analyze(small_basis, u)
        expected = np.zeros(63)
        expected[0], expected[3] = 2.0, -3.0
        np.testing.assert_allclose(c, expected, atol=1e-12)

    def test_synthesize_inverts_analyze(self, small_basis, rng):
        u = rng.generator().standard_normal(63)
        np.testing.assert_allclose(synthesize(small_basis, analyze(small_basis, u)), u, atol=1e-12)

    def test_rows_analyzed_independently(self, small_basis):
        rows = np.stack([small_basis.basis_matrix[:, 0], small_basis.basis_matrix[:, 2]])
        c = analyze(small_basis, rows)
        assert c.shape == (2, 63)
        assert c[0, 0] == pytest.approx(1.0)
        assert c[1, 2] == pytest.approx(1.0)


class TestDecaySpec:
    """Tests for DecaySpec."""

    def test_power_law(self):
        decay = DecaySpec.power_law(3, 3.0, 2.0)
        np.testing.assert_allclose(decay.lam, [1.0, 1 / 8, 1 / 27])
        np.testing.assert_allclose(decay.kappa, [1.0, 1 / 4, 1 / 9])

    def test_zero_kappa_rejected(self):
        with pytest.raises(ValidationError):
            DecaySpec(np.ones(2), np.array([1.0, 0.0]))

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValidationError):
            DecaySpec(np.array([1.0, -1.0]), np.ones(2))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            DecaySpec(np.ones(2), np.ones(3))


class TestSampleInitialEnsemble:
    """Tests for sample_initial_ensemble."""

    def test_zero_amplitudes(self, small_basis, rng):
        decay = DecaySpec(np.zeros(63), np.ones(63))
        ens = sample_initial_ensemble(small_basis, decay, 10, rng)
        np.testing.assert_array_equal(ens.members, np.zeros((10, 63)))

    def test_single_mode_variance(self, small_basis):
        lam = np.zeros(63)
        lam[0] = 1.0
        ens = sample_initial_ensemble(small_basis, DecaySpec(lam, np.ones(63)), 10000, RngStream(11))
        c = analyze(small_basis, ens.members)
        np.testing.assert_allclose(c[:, 1:], 0.0, atol=1e-12)
        # sd of the sample variance at N = 10000 is about 0.014
        assert c[:, 0].var(ddof=1) == pytest.approx(1.0, abs=0.06)

    def test_coefficient_variances(self, small_basis):
        decay = DecaySpec.power_law(63)
        ens = sample_initial_ensemble(small_basis, decay, 10000, RngStream(12))
        variances = analyze(small_basis, ens.members).var(axis=0, ddof=1)
        np.testing.assert_allclose(variances[:5], decay.lam[:5] ** 2, rtol=0.1)

    def test_sample_mean_near_zero(self, small_basis):
        decay = DecaySpec.power_law(63)
        ens = sample_initial_ensemble(small_basis, decay, 10000, RngStream(13))
        mean = ens.members.mean(axis=0)
        mean_norm = np.sqrt(small_basis.quadrature @ mean ** 2)
        assert mean_norm <= 4.0 * np.sqrt(np.sum(decay.lam ** 2) / 10000)

    def test_uniform_weights(self, small_basis, rng):
        ens = sample_initial_ensemble(small_basis, DecaySpec.power_law(63), 8, rng)
        np.testing.assert_allclose(ens.weights, np.full(8, 0.125))

    def test_amplitude_count_mismatch(self, small_basis, rng):
        with pytest.raises(ValidationError):
            sample_initial_ensemble(small_basis, DecaySpec.power_law(10), 5, rng)


class TestUNorm:
    """Tests for u_norm and the norm evaluators."""

    def test_unit_kappa_is_euclidean(self, rng):
        c = rng.generator().standard_normal(6)
        assert u_norm(DecaySpec(np.ones(6), np.ones(6)), c) == pytest.approx(np.linalg.norm(c))

    def test_scaled_unit_vector(self):
        assert u_norm(DecaySpec(np.ones(2), np.array([2.0, 1.0])), [1.0, 0.0]) == pytest.approx(0.5)

    def test_two_modes(self):
        assert u_norm(DecaySpec(np.ones(2), np.array([1.0, 2.0])), [1.0, 1.0]) == pytest.approx(1.118034, abs=1e-6)

    def test_norm_properties(self, rng):
        decay = DecaySpec.power_law(8)
        generator = rng.generator()
        for _ in range(50):
            a, b = generator.standard_normal(8), generator.standard_normal(8)
            scale = generator.normal()
            assert u_norm(decay, scale * a) == pytest.approx(abs(scale) * u_norm(decay, a))
            assert u_norm(decay, a + b) <= u_norm(decay, a) + u_norm(decay, b) + 1e-12

    def test_unorm_distances_match_u_norm(self, small_basis, rng):
        decay = DecaySpec.power_law(63)
        generator = rng.generator()
        a, b = generator.standard_normal(63), generator.standard_normal(63)
        distance = UNorm(small_basis, decay).distances(a, b)[0, 0]
        assert distance == pytest.approx(u_norm(decay, analyze(small_basis, a - b)), rel=1e-10)

    def test_euclidean_distances(self):
        d = EuclideanNorm().distances(np.array([[0.0], [1.0]]), np.array([[3.0]]))
        np.testing.assert_allclose(d, [[3.0], [2.0]])


class TestPointwiseVariance:
    """Tests for pointwise_variance."""

    def test_matches_samples(self, small_basis):
        decay = DecaySpec.power_law(63)
        ens = sample_initial_ensemble(small_basis, decay, 10000, RngStream(13))
        x = small_basis.mesh[31]
        expected = pointwise_variance(small_basis, decay, x)
        assert ens.members[:, 31].var(ddof=1) == pytest.approx(expected, rel=0.07)
