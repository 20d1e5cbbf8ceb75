"""Dense linear-algebra primitives: SVD partitions, projectors and principal angles."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DegeneracyError, ParameterError

logger = logging.getLogger(__name__)

# Singular values below max(m, n) * sigma_max * 2**-40 count as zero.
RANK_CUTOFF = 2.0**-40


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a two-dimensional float array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be two-dimensional, got shape {arr.shape}")
    return arr


def check_symmetric(mat: np.ndarray, tol: float = 1e-8, name: str = "matrix") -> np.ndarray:
    """Validate that ``mat`` is square and symmetric within ``tol`` (relative to its scale)."""
    mat = as_matrix(mat, name)
    if mat.shape[0] != mat.shape[1]:
        raise ParameterError(f"{name} must be square, got shape {mat.shape}")
    if mat.size == 0:
        return mat
    scale = max(1.0, float(np.max(np.abs(mat))))
    if float(np.max(np.abs(mat - mat.T))) > tol * scale:
        raise ParameterError(f"{name} is not symmetric within {tol:g}")
    return mat


def rank_tolerance(shape: tuple[int, ...], sigma_max: float) -> float:
    return max(shape) * sigma_max * RANK_CUTOFF


def numerical_rank(a: np.ndarray) -> int:
    a = as_matrix(a)
    if a.size == 0:
        return 0
    s = sla.svdvals(a)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tolerance(a.shape, s[0])))


def pseudoinverse(a: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse with the package-wide rank cutoff."""
    a = as_matrix(a)
    return sla.pinv(a, atol=0.0, rtol=max(a.shape) * RANK_CUTOFF)


# -------------------------------------------------------------------
# SVD partitioning
# -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SvdPartition:
    """Rank-k split of a full SVD: A = U_k Σ_k V_kᵀ + Ū_k Σ̄_k V̄_kᵀ."""

    u_k: np.ndarray
    u_bar_k: np.ndarray
    sigma_k: np.ndarray
    sigma_bar_k: np.ndarray
    v_k: np.ndarray
    v_bar_k: np.ndarray
    k: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.u_k.shape[0], self.v_k.shape[0]

    @property
    def optimal_error(self) -> float:
        """‖Σ̄_k‖_F, the smallest Frobenius error of any rank-k approximation."""
        return float(np.linalg.norm(self.sigma_bar_k))

    @property
    def rank(self) -> int:
        """Numerical rank of A under the package-wide cutoff."""
        s = np.concatenate([self.sigma_k, self.sigma_bar_k])
        if s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s > rank_tolerance(self.shape, float(s[0]))))

    @property
    def sigma_next(self) -> float:
        """σ_{k+1}, or 0 when the partition is exact."""
        return float(self.sigma_bar_k[0]) if self.sigma_bar_k.size else 0.0

    def sigma_bar_matrix(self) -> np.ndarray:
        """Σ̄_k as the rectangular (m−k)×(n−k) diagonal block."""
        m, n = self.shape
        out = np.zeros((m - self.k, n - self.k))
        idx = np.arange(self.sigma_bar_k.size)
        out[idx, idx] = self.sigma_bar_k
        return out

    def reconstruct(self) -> np.ndarray:
        head = (self.u_k * self.sigma_k) @ self.v_k.T
        tail = self.u_bar_k @ self.sigma_bar_matrix() @ self.v_bar_k.T
        return head + tail


@dataclass(frozen=True, eq=False)
class FullSvd:
    """Full SVD of a matrix, reusable across several target ranks."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.vt.shape[0]

    @property
    def rank(self) -> int:
        if self.s.size == 0 or self.s[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.s > rank_tolerance(self.shape, self.s[0])))

    def partition(self, k: int) -> SvdPartition:
        limit = min(self.shape)
        if not 1 <= k <= limit:
            raise ParameterError(f"k must lie in [1, {limit}], got {k}")
        return SvdPartition(
            u_k=self.u[:, :k],
            u_bar_k=self.u[:, k:],
            sigma_k=self.s[:k],
            sigma_bar_k=self.s[k:],
            v_k=self.vt[:k].T,
            v_bar_k=self.vt[k:].T,
            k=k,
        )


def full_svd(a) -> FullSvd:
    a = as_matrix(a, "a")
    u, s, vt = sla.svd(a, full_matrices=True)
    return FullSvd(u=u, s=s, vt=vt)


def svd_partition(a, k: int) -> SvdPartition:
    """
    Partition the SVD of ``a`` at rank ``k``.

    The complements Ū_k and V̄_k are the trailing columns of the full SVD factors, so the
    blocks are exactly orthogonal. With repeated singular values at the cut the leading
    subspace is whichever one the SVD returned.
    """
    return full_svd(a).partition(k)


# -------------------------------------------------------------------
# Projectors and principal angles
# -------------------------------------------------------------------


def orthonormal_basis(z) -> np.ndarray:
    """Orthonormal basis of range(Z); Z must have full column rank."""
    z = as_matrix(z, "z")
    rank = numerical_rank(z)
    if rank < z.shape[1]:
        raise DegeneracyError(
            f"matrix with {z.shape[1]} columns has numerical rank {rank}", rank=rank
        )
    q, _ = sla.qr(z, mode="economic")
    return q


def orthonormal_complement(m_basis: np.ndarray) -> np.ndarray:
    m_basis = as_matrix(m_basis, "m_basis")
    q, _ = sla.qr(m_basis, mode="full")
    return q[:, m_basis.shape[1] :]


def projector_residual_norm(a, z) -> float:
    """‖(I − π(Z))A‖_F, evaluated as ‖A − Q(QᵀA)‖_F."""
    a = as_matrix(a, "a")
    z = as_matrix(z, "z")
    if a.shape[0] != z.shape[0]:
        raise ParameterError(f"row mismatch: a has {a.shape[0]} rows, z has {z.shape[0]}")
    q = orthonormal_basis(z)
    return float(np.linalg.norm(a - q @ (q.T @ a)))


def _check_orthonormal(m_basis: np.ndarray, name: str) -> None:
    k = m_basis.shape[1]
    if np.linalg.norm(m_basis.T @ m_basis - np.eye(k)) > 1e-8:
        raise ParameterError(f"{name} must have orthonormal columns")


def tangent_matrix(m_basis, n_mat, complement: np.ndarray | None = None) -> np.ndarray:
    """
    Tangent matrix M̄ᵀN(MᵀN)⁺ of the principal angles between range(M) and range(N).

    Args:
        m_basis: n×k matrix with orthonormal columns.
        n_mat: n×k matrix of full column rank.
        complement: optional orthonormal complement M̄; computed by a full QR when omitted.

    Raises:
        DegeneracyError: when MᵀN is numerically singular (an angle at pi/2).
    """
    m_basis = as_matrix(m_basis, "m_basis")
    n_mat = as_matrix(n_mat, "n_mat")
    if m_basis.shape != n_mat.shape:
        raise ParameterError(f"shape mismatch: {m_basis.shape} vs {n_mat.shape}")
    _check_orthonormal(m_basis, "m_basis")
    if complement is None:
        complement = orthonormal_complement(m_basis)

    cross = m_basis.T @ n_mat
    s = sla.svdvals(cross)
    if s.size and (s[0] == 0.0 or s[-1] <= rank_tolerance(cross.shape, s[0])):
        rank = numerical_rank(cross)
        raise DegeneracyError("MᵀN is numerically singular; a principal angle is pi/2", rank=rank)
    return (complement.T @ n_mat) @ pseudoinverse(cross)


def principal_angles(m_basis, n_basis) -> np.ndarray:
    """Principal angles θ_i = arccos(σ_i(MᵀN)) in nonincreasing order."""
    m_basis = as_matrix(m_basis, "m_basis")
    n_basis = as_matrix(n_basis, "n_basis")
    if m_basis.shape != n_basis.shape:
        raise ParameterError(f"shape mismatch: {m_basis.shape} vs {n_basis.shape}")
    cosines = np.clip(sla.svdvals(m_basis.T @ n_basis), 0.0, 1.0)
    return np.sort(np.arccos(cosines))[::-1]


def psd_leq(m1, m2, tol: float = 1e-8) -> bool:
    """True iff M1 ⪯ M2 in the Loewner order, i.e. λ_min(M2 − M1) ≥ −tol."""
    m1 = check_symmetric(m1, tol, "m1")
    m2 = check_symmetric(m2, tol, "m2")
    if m1.shape != m2.shape:
        raise ParameterError(f"shape mismatch: {m1.shape} vs {m2.shape}")
    diff = m2 - m1
    lam_min = sla.eigvalsh(0.5 * (diff + diff.T))[0]
    return bool(lam_min >= -tol)


def trace_inequality(sigma_k, k_k) -> tuple[float, float]:
    """
    Both sides of tr(Σ_k² K_k⁻¹) ≤ ‖Σ_k‖_F² / λ_min(K_k).

    Returns:
        ``(lhs, rhs)``.
    """
    sigma_k = np.asarray(sigma_k, dtype=float)
    k_k = check_symmetric(k_k, 1e-8, "k_k")
    lhs = float(np.trace(np.diag(sigma_k**2) @ np.linalg.inv(k_k)))
    lam_min = float(sla.eigvalsh(k_k)[0])
    rhs = float(np.sum(sigma_k**2)) / lam_min
    return lhs, rhs
