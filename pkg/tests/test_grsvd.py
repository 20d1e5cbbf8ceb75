"""Tests for the generalized randomized SVD and its error statistics."""

import numpy as np
import pytest

from grsvdcalc.errors import DegeneracyError, ParameterError
from grsvdcalc.grsvd import empirical_error_stats, generalized_rsvd
from grsvdcalc.linalg import svd_partition
from grsvdcalc.oracle import matrix_with_spectrum
from grsvdcalc.sampling import CovarianceOperator, SeedSpec, covariance_from_factor


class TestGeneralizedRsvd:
    """Test single runs of the two-stage algorithm."""

    def test_exact_low_rank_recovered(self, gen):
        """Test that a rank-3 matrix is recovered exactly when K = AAᵀ."""
        a = matrix_with_spectrum([3.0, 2.0, 1.0, 0, 0, 0, 0, 0], gen)
        run = generalized_rsvd(a, covariance_from_factor(a), 3, 3, SeedSpec(1))
        np.testing.assert_allclose(run.factors.reconstruct(), a, atol=1e-10)
        np.testing.assert_allclose(run.factors.sigma_hat_k, [3.0, 2.0, 1.0], rtol=1e-10)
        assert run.residual < 1e-10

    def test_factors_have_orthonormal_columns(self, decaying_matrix):
        run = generalized_rsvd(
            decaying_matrix, covariance_from_factor(decaying_matrix), 10, 4, SeedSpec(2)
        )
        u, v = run.factors.u_hat_k, run.factors.v_hat_k
        assert u.shape == (20, 4) and v.shape == (20, 4)
        np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(v.T @ v, np.eye(4), atol=1e-12)
        assert run.sketch.shape == (20, 10)
        assert run.sketch_rank == 10

    def test_truncation_error_at_least_optimal(self, decaying_matrix, decaying_partition):
        """Test that the rank-k error never beats ‖Σ̄_k‖_F while the residual may."""
        run = generalized_rsvd(
            decaying_matrix, covariance_from_factor(np.eye(20)), 10, 4, SeedSpec(3)
        )
        assert run.truncation_error >= decaying_partition.optimal_error * (1 - 1e-12)
        assert run.residual <= run.truncation_error * (1 + 1e-12)

    def test_same_seed_same_run(self, decaying_matrix):
        cov = covariance_from_factor(np.eye(20))
        first = generalized_rsvd(decaying_matrix, cov, 8, 4, SeedSpec(5, 1))
        second = generalized_rsvd(decaying_matrix, cov, 8, 4, SeedSpec(5, 1))
        assert first.residual == second.residual

    def test_ell_above_rank_rejected(self, decaying_matrix):
        cov = covariance_from_factor(np.eye(20))
        with pytest.raises(ParameterError):
            generalized_rsvd(decaying_matrix, cov, 21, 4, SeedSpec(0))

    def test_ell_above_numerical_rank_rejected(self, gen):
        """Test that ℓ is checked against the numerical rank, not min(m, n)."""
        a = matrix_with_spectrum([3.0, 2.0, 1.0, 0.5, 0, 0, 0, 0, 0, 0], gen)
        cov = covariance_from_factor(np.eye(10))
        with pytest.raises(ParameterError, match=r"rank\(A\)=4"):
            generalized_rsvd(a, cov, 6, 2, SeedSpec(0))
        assert generalized_rsvd(a, cov, 4, 2, SeedSpec(0)).sketch_rank == 4

    def test_known_rank_is_used(self, gen):
        a = matrix_with_spectrum([3.0, 2.0, 1.0, 0.5, 0, 0, 0, 0, 0, 0], gen)
        with pytest.raises(ParameterError):
            generalized_rsvd(a, covariance_from_factor(np.eye(10)), 5, 2, SeedSpec(0), rank_a=4)

    def test_k_above_ell_rejected(self, decaying_matrix):
        cov = covariance_from_factor(np.eye(20))
        with pytest.raises(ParameterError):
            generalized_rsvd(decaying_matrix, cov, 3, 4, SeedSpec(0))

    def test_dimension_mismatch(self, decaying_matrix):
        cov = covariance_from_factor(np.eye(5))
        with pytest.raises(ParameterError):
            generalized_rsvd(decaying_matrix, cov, 8, 4, SeedSpec(0))

    def test_low_rank_covariance_raises(self, decaying_matrix, decaying_partition):
        """Test that a rank-4 covariance cannot fill a width-8 sketch."""
        cov = CovarianceOperator(decaying_partition.u_k)
        with pytest.raises(DegeneracyError) as excinfo:
            generalized_rsvd(decaying_matrix, cov, 8, 4, SeedSpec(0))
        assert excinfo.value.rank == 4

    def test_low_rank_covariance_truncated(self, decaying_matrix, decaying_partition):
        """Test that truncation keeps the numerical range of the sketch."""
        cov = CovarianceOperator(decaying_partition.u_k)
        run = generalized_rsvd(
            decaying_matrix, cov, 8, 4, SeedSpec(0), truncate_rank_deficient=True
        )
        assert run.sketch_rank == 4
        assert run.residual == pytest.approx(decaying_partition.optimal_error, rel=1e-8)


class TestEmpiricalErrorStats:
    """Test aggregation over independent sketches."""

    def test_summary_is_consistent(self, decaying_matrix, decaying_partition):
        stats = empirical_error_stats(
            decaying_matrix, covariance_from_factor(np.eye(20)), 10, 4, 15, SeedSpec(11)
        )
        assert stats.n_runs == 15
        assert stats.n_failed == 0
        assert stats.min <= stats.mean <= stats.max
        assert stats.std_dev >= 0
        assert stats.optimal_error == pytest.approx(decaying_partition.optimal_error)
        assert stats.ratio_minus_one == pytest.approx(
            stats.mean / decaying_partition.optimal_error - 1.0
        )
        assert stats.truncation_ratio_minus_one >= -1e-12

    def test_workers_do_not_change_results(self, decaying_matrix):
        """Test that concurrent runs reproduce the sequential statistics."""
        cov = covariance_from_factor(decaying_matrix)
        seq = empirical_error_stats(decaying_matrix, cov, 8, 4, 12, SeedSpec(4))
        par = empirical_error_stats(decaying_matrix, cov, 8, 4, 12, SeedSpec(4), workers=3)
        assert seq == par

    def test_verify_runs_deterministic_check(self, decaying_matrix, decaying_partition):
        stats = empirical_error_stats(
            decaying_matrix,
            covariance_from_factor(np.eye(20)),
            10,
            4,
            10,
            SeedSpec(8),
            partition=decaying_partition,
            verify=True,
        )
        assert stats.n_runs == 10

    def test_all_runs_failing_raises(self, decaying_matrix):
        cov = CovarianceOperator(np.ones((20, 1)))
        with pytest.raises(DegeneracyError):
            empirical_error_stats(decaying_matrix, cov, 3, 1, 4, SeedSpec(0))

    def test_exact_low_rank_ratio_is_zero(self, gen):
        """Test that a vanishing optimum gives a zero ratio instead of dividing by zero."""
        a = matrix_with_spectrum([2.0, 1.0, 0, 0, 0, 0], gen)
        stats = empirical_error_stats(a, covariance_from_factor(a), 2, 2, 5, SeedSpec(1))
        assert stats.ratio_minus_one == 0.0

    def test_partition_rank_mismatch(self, decaying_matrix, decaying_partition):
        with pytest.raises(ParameterError):
            empirical_error_stats(
                decaying_matrix,
                covariance_from_factor(np.eye(20)),
                10,
                3,
                5,
                SeedSpec(0),
                partition=decaying_partition,
            )

    def test_partition_is_reused(self, decaying_matrix):
        part = svd_partition(decaying_matrix, 4)
        cov = covariance_from_factor(np.eye(20))
        with_part = empirical_error_stats(
            decaying_matrix, cov, 9, 4, 5, SeedSpec(2), partition=part
        )
        without = empirical_error_stats(decaying_matrix, cov, 9, 4, 5, SeedSpec(2))
        assert with_part.mean == pytest.approx(without.mean, rel=1e-12)
