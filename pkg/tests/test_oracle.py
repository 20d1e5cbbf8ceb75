"""Tests for the Monte Carlo and deterministic oracles."""

import numpy as np
import pytest

from grsvdcalc.bounds import coefficients_tau_rho, solve_ut
from grsvdcalc.daproblem import DaScenario, assemble_da_matrix, covariance_case
from grsvdcalc.errors import HypothesisError, ParameterError
from grsvdcalc.linalg import svd_partition
from grsvdcalc.oracle import (
    conditional_params,
    conditional_resampling_check,
    deterministic_bound_check,
    lemma_ordering_check,
    matrix_with_spectrum,
    mc_core_expectation,
    probability_exceedance,
    proposition_tail_bound,
    random_orthogonal,
    run_oracle_suite,
    sample_core_values,
    sketch_blocks,
    wishart_inverse_check,
)
from grsvdcalc.sampling import (
    CovarianceOperator,
    SeedSpec,
    covariance_from_factor,
    covariance_from_matrix,
)


class TestInstances:
    """Test the random instance builders."""

    def test_random_orthogonal(self, gen):
        q = random_orthogonal(6, gen)
        np.testing.assert_allclose(q.T @ q, np.eye(6), atol=1e-12)

    def test_prescribed_spectrum(self, gen):
        sigma = [4.0, 2.0, 1.0]
        a = matrix_with_spectrum(sigma, gen, shape=(5, 3))
        assert a.shape == (5, 3)
        np.testing.assert_allclose(np.linalg.svd(a, compute_uv=False), sigma, rtol=1e-12)


class TestConditionalLaw:
    """Test the conditional Gaussian decomposition of the sketch blocks."""

    def test_identity_covariance(self, decaying_partition):
        """Test that K = I makes the blocks independent with unit covariance."""
        params = conditional_params(decaying_partition, covariance_from_factor(np.eye(20)))
        np.testing.assert_allclose(params.mean_map, 0.0, atol=1e-12)
        np.testing.assert_allclose(params.schur, np.eye(16), atol=1e-12)

    def test_schur_complement_formula(self, decaying_partition, spd_20):
        """Test K/K_k = K̄_k − K_⊥ K_k⁻¹ K_⊥ᵀ and that it is PSD."""
        cov = covariance_from_matrix(spd_20)
        params = conditional_params(decaying_partition, cov)
        u, u_bar = decaying_partition.u_k, decaying_partition.u_bar_k
        k_k = u.T @ spd_20 @ u
        k_perp = u_bar.T @ spd_20 @ u
        expected = u_bar.T @ spd_20 @ u_bar - k_perp @ np.linalg.solve(k_k, k_perp.T)
        np.testing.assert_allclose(params.schur, expected, atol=1e-10)
        np.testing.assert_allclose(params.mean_map, k_perp @ np.linalg.inv(k_k), atol=1e-10)
        assert np.linalg.eigvalsh(params.schur)[0] > -1e-12
        root = params.schur_sqrt()
        np.testing.assert_allclose(root @ root, params.schur, atol=1e-10)

    def test_rank_deficient_z_k(self, decaying_partition):
        with pytest.raises(HypothesisError):
            sketch_blocks(decaying_partition, decaying_partition.u_bar_k[:, :6])

    def test_misaligned_covariance(self, decaying_partition):
        with pytest.raises(HypothesisError):
            conditional_params(decaying_partition, CovarianceOperator(decaying_partition.u_bar_k))

    def test_resampling_matches_direct_sketches(self, decaying_partition, spd_20):
        check = conditional_resampling_check(
            decaying_partition, covariance_from_matrix(spd_20), 10, 4000, SeedSpec(31)
        )
        assert check.passed
        assert 0.0 <= check.statistic <= 1.0


class TestCoreExpectation:
    """Test the Monte Carlo estimate of E‖Z̄_k Z_k⁺ Σ_k‖_F² against its closed form."""

    def test_identity_closed_form(self, gen):
        """Test (n−k)k/(ℓ−k−1) = 0.8 for Σ_k = I, n = 4, k = 2, ℓ = 8."""
        part = svd_partition(matrix_with_spectrum([1.0, 1.0, 0.5, 0.25], gen), 2)
        est = mc_core_expectation(part, covariance_from_factor(np.eye(4)), 8, 20_000, SeedSpec(1))
        assert est.closed_form == pytest.approx(0.8, rel=1e-10)
        assert est.within(4.0)
        assert est.n_samples + est.n_rejected == 20_000

    def test_random_covariance(self, decaying_partition, spd_20):
        cov = covariance_from_matrix(spd_20)
        est = mc_core_expectation(decaying_partition, cov, 10, 20_000, SeedSpec(2))
        assert est.within(4.0)
        assert est.std_error > 0

    def test_samples_reproducible(self, decaying_partition):
        cov = covariance_from_factor(np.eye(20))
        first, _ = sample_core_values(decaying_partition, cov, 8, 1500, SeedSpec(3))
        second, _ = sample_core_values(decaying_partition, cov, 8, 1500, SeedSpec(3))
        np.testing.assert_array_equal(first, second)

    def test_requirements(self, decaying_partition):
        cov = covariance_from_factor(np.eye(20))
        with pytest.raises(ParameterError):
            mc_core_expectation(decaying_partition, cov, 5, 5000, SeedSpec(0))
        with pytest.raises(ParameterError):
            mc_core_expectation(decaying_partition, cov, 8, 999, SeedSpec(0))


class TestWishart:
    """Test the inverse-Wishart mean."""

    def test_identity_scale(self):
        check = wishart_inverse_check(2, 8, np.eye(2), 20_000, SeedSpec(4))
        np.testing.assert_allclose(check.target, np.eye(2) / 5)
        assert check.passed

    def test_general_scale(self, spd_20):
        check = wishart_inverse_check(3, 10, spd_20[:3, :3], 20_000, SeedSpec(5))
        assert check.passed

    def test_needs_degrees_of_freedom(self):
        with pytest.raises(ParameterError):
            wishart_inverse_check(2, 3, np.eye(2), 100, SeedSpec(0))


class TestDeterministicStatements:
    """Test the sketch-independent inequalities on random instances."""

    def test_residual_bound(self, gen):
        for _ in range(50):
            a = gen.standard_normal((25, 25)) * np.geomspace(1.0, 1e-3, 25)
            z = gen.standard_normal((25, 9))
            check = deterministic_bound_check(a, z, 4)
            assert check.holds

    def test_loewner_ordering(self, decaying_partition, gen):
        for _ in range(20):
            check = lemma_ordering_check(decaying_partition, gen.standard_normal((20, 8)))
            assert check.holds

    def test_rank_deficient_sketch(self, decaying_matrix):
        with pytest.raises(HypothesisError):
            deterministic_bound_check(decaying_matrix, np.ones((20, 3)), 2)


class TestTailBounds:
    """Test the tail bound on the core term and the empirical exceedance rate."""

    def test_tail_bound_needs_oversampling(self, decaying_partition):
        coeffs = coefficients_tau_rho(decaying_partition, covariance_from_factor(np.eye(20)))
        with pytest.raises(HypothesisError):
            proposition_tail_bound(coeffs, 2.0, 2.0, ell=7)
        assert proposition_tail_bound(coeffs, 2.0, 2.0, ell=12) > 0

    def test_tail_bound_rarely_exceeded(self, decaying_partition, spd_20):
        """Test that fewer than δ + 3 SE of the core draws exceed the tail bound."""
        cov = covariance_from_matrix(spd_20)
        coeffs = coefficients_tau_rho(decaying_partition, cov, ell=12)
        delta = 0.05
        u, t = solve_ut(12, 4, delta)
        bound = proposition_tail_bound(coeffs, u, t)
        values, _ = sample_core_values(decaying_partition, cov, 12, 4000, SeedSpec(6))
        fraction = np.mean(np.sqrt(values) > bound)
        assert fraction <= delta + 3 * np.sqrt(delta * (1 - delta) / values.size)

    def test_probability_exceedance_on_reduced_problem(self):
        da = assemble_da_matrix(DaScenario(n=80, m=16, name="reduced"))
        cov = covariance_case("B", da)
        res = probability_exceedance(da.a, cov, 20, 10, 0.05, 200, SeedSpec(9))
        assert res.passed
        assert res.n_runs == 200
        assert res.bound > svd_partition(da.a, 10).optimal_error


@pytest.mark.slow
def test_oracle_suite_passes():
    results = run_oracle_suite(n_samples=20_000, seed=3, n_instances=200)
    assert {r.name for r in results} >= {
        "core_expectation_identity_K",
        "wishart_inverse_mean",
        "deterministic_bound",
        "probability_bound_exceedance",
    }
    failed = [r.name for r in results if not r.passed]
    assert failed == []
