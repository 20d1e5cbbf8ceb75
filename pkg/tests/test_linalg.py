"""Tests for SVD partitions, projectors and principal angles."""

import math

import numpy as np
import pytest

from grsvdcalc.errors import DegeneracyError, ParameterError
from grsvdcalc.linalg import (
    check_symmetric,
    full_svd,
    numerical_rank,
    orthonormal_basis,
    principal_angles,
    projector_residual_norm,
    psd_leq,
    svd_partition,
    tangent_matrix,
    trace_inequality,
)
from grsvdcalc.oracle import matrix_with_spectrum


class TestSvdPartition:
    """Test the rank-k split of the SVD."""

    def test_blocks_reconstruct_matrix(self, decaying_matrix):
        """Test that head and tail blocks add back up to A."""
        part = svd_partition(decaying_matrix, 4)
        np.testing.assert_allclose(part.reconstruct(), decaying_matrix, atol=1e-12)

    def test_optimal_error_is_tail_norm(self, decaying_matrix):
        """Test that the optimal error is the Frobenius norm of the trailing singular values."""
        s = np.linalg.svd(decaying_matrix, compute_uv=False)
        part = svd_partition(decaying_matrix, 4)
        assert part.optimal_error == pytest.approx(np.linalg.norm(s[4:]), rel=1e-12)
        assert part.sigma_next == pytest.approx(s[4], rel=1e-12)

    def test_complements_are_orthogonal(self, decaying_matrix):
        """Test that U_k and Ū_k together form an orthogonal matrix."""
        part = svd_partition(decaying_matrix, 4)
        u = np.hstack([part.u_k, part.u_bar_k])
        np.testing.assert_allclose(u.T @ u, np.eye(20), atol=1e-12)

    def test_rectangular_tail_block(self, gen):
        """Test that Σ̄_k has shape (m-k)x(n-k) for a wide matrix."""
        a = gen.standard_normal((5, 8))
        part = svd_partition(a, 2)
        assert part.sigma_bar_matrix().shape == (3, 6)
        np.testing.assert_allclose(part.reconstruct(), a, atol=1e-12)

    @pytest.mark.parametrize("k", [0, 21])
    def test_k_out_of_range(self, decaying_matrix, k):
        """Test that k outside [1, min(m, n)] is rejected."""
        with pytest.raises(ParameterError):
            svd_partition(decaying_matrix, k)

    def test_full_svd_rank(self):
        """Test the numerical rank of an exactly rank-2 matrix."""
        a = np.outer([1.0, 2.0, 3.0], [1.0, 0.0, 1.0]) + np.outer([0.0, 1.0, 0.0], [0.0, 1.0, 0.0])
        assert full_svd(a).rank == 2

    def test_partition_rank_matches_full_svd(self, gen):
        a = matrix_with_spectrum([3.0, 2.0, 1.0, 0, 0, 0], gen)
        svd = full_svd(a)
        assert svd.partition(2).rank == svd.rank == numerical_rank(a) == 3
        assert numerical_rank(a) == 2


class TestProjectors:
    """Test residual norms of orthogonal projections."""

    def test_leading_subspace_gives_optimal_error(self, decaying_matrix):
        """Test that projecting onto range(U_k) leaves exactly ‖Σ̄_k‖_F."""
        part = svd_partition(decaying_matrix, 4)
        residual = projector_residual_norm(decaying_matrix, part.u_k)
        assert residual == pytest.approx(part.optimal_error, rel=1e-10)

    def test_residual_never_below_optimum_for_k_columns(self, decaying_matrix, gen):
        """Test that no k-dimensional range beats the SVD."""
        part = svd_partition(decaying_matrix, 4)
        for _ in range(10):
            z = gen.standard_normal((20, 4))
            assert projector_residual_norm(decaying_matrix, z) >= part.optimal_error * (1 - 1e-12)

    def test_rank_deficient_basis_raises(self):
        """Test that dependent columns are rejected."""
        z = np.ones((5, 2))
        with pytest.raises(DegeneracyError) as excinfo:
            orthonormal_basis(z)
        assert excinfo.value.rank == 1

    def test_row_mismatch(self, decaying_matrix):
        with pytest.raises(ParameterError):
            projector_residual_norm(decaying_matrix, np.ones((3, 1)))


class TestTangentMatrix:
    """Test the tangent of the principal angles."""

    def test_same_subspace_has_zero_tangent(self, decaying_partition):
        """Test that range(N) = range(M) gives a zero tangent matrix."""
        u_k = decaying_partition.u_k
        mixing = np.array([[2.0, 1.0, 0, 0], [0, 1.0, 0, 0], [0, 0, 3.0, 0], [0, 0, 1.0, 1.0]])
        tan = tangent_matrix(u_k, u_k @ mixing, complement=decaying_partition.u_bar_k)
        assert np.linalg.norm(tan) < 1e-12

    def test_single_angle(self):
        """Test that the tangent norm equals tan(θ) for one principal angle."""
        m = np.array([[1.0], [0.0], [0.0]])
        n = np.array([[1.0], [0.5], [0.0]])
        tan = tangent_matrix(m, n)
        assert np.linalg.norm(tan) == pytest.approx(0.5, rel=1e-12)
        angles = principal_angles(m, n / np.linalg.norm(n))
        assert angles[0] == pytest.approx(math.atan(0.5), rel=1e-12)

    def test_orthogonal_subspaces_raise(self):
        """Test that an angle of pi/2 is reported as degenerate."""
        m = np.array([[1.0], [0.0], [0.0]])
        n = np.array([[0.0], [1.0], [0.0]])
        with pytest.raises(DegeneracyError):
            tangent_matrix(m, n)

    def test_non_orthonormal_m_rejected(self):
        m = np.array([[2.0], [0.0]])
        with pytest.raises(ParameterError):
            tangent_matrix(m, m)


class TestLoewnerOrder:
    """Test psd_leq and the trace inequality."""

    def test_zero_below_identity(self):
        assert psd_leq(np.zeros((3, 3)), np.eye(3))
        assert not psd_leq(np.eye(3), np.zeros((3, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            psd_leq(np.eye(2), np.eye(3))

    def test_non_symmetric_rejected(self):
        with pytest.raises(ParameterError):
            check_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_trace_inequality_holds(self, spd_20):
        """Test tr(Σ_k² K_k⁻¹) ≤ ‖Σ_k‖_F² / λ_min(K_k)."""
        lhs, rhs = trace_inequality(np.array([3.0, 2.0, 1.0]), spd_20[:3, :3])
        assert lhs <= rhs * (1 + 1e-12)
