"""Generalized randomized SVD (sketch with covariance K) and its empirical error statistics."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import DegeneracyError, ParameterError
from .linalg import SvdPartition, as_matrix, numerical_rank, rank_tolerance, svd_partition
from .sampling import CovarianceOperator, SeedSpec, sample_sketch

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LowRankFactors:
    """Rank-k approximation A ≈ Û_k Σ̂_k V̂_kᵀ."""

    u_hat_k: np.ndarray
    sigma_hat_k: np.ndarray
    v_hat_k: np.ndarray

    @property
    def k(self) -> int:
        return self.sigma_hat_k.size

    def reconstruct(self) -> np.ndarray:
        return (self.u_hat_k * self.sigma_hat_k) @ self.v_hat_k.T


class GrsvdRun(NamedTuple):
    factors: LowRankFactors
    sketch: np.ndarray
    residual: float
    truncation_error: float
    sketch_rank: int


@dataclass(frozen=True)
class ErrorStats:
    """
    Residuals ‖(I − π(Z))A‖_F aggregated over independent sketches.

    ``ratio_minus_one`` is mean / ‖Σ̄_k‖_F − 1. With ℓ > k the projected residual can fall
    below ‖Σ̄_k‖_F, so it may be negative; ``truncation_mean`` (the rank-k error
    ‖A − Û_kΣ̂_kV̂_kᵀ‖_F) never does.
    """

    mean: float
    std_dev: float
    min: float
    max: float
    n_runs: int
    ratio_minus_one: float
    n_failed: int = 0
    optimal_error: float = 0.0
    truncation_mean: float = 0.0
    truncation_ratio_minus_one: float = 0.0


def _range_basis(z: np.ndarray, truncate: bool) -> np.ndarray:
    """Orthonormal basis of range(Z) from a thin QR, trapping rank deficiency on diag(R)."""
    tol = rank_tolerance(z.shape, 1.0)
    if not truncate:
        q, r = sla.qr(z, mode="economic")
        diag = np.abs(np.diag(r))
        if diag.size and (diag[0] == 0.0 or np.any(diag < tol * diag[0])):
            rank = int(np.count_nonzero(diag >= tol * diag[0])) if diag[0] > 0 else 0
            raise DegeneracyError(
                f"sketch with {z.shape[1]} columns is numerically rank deficient (rank {rank})",
                rank=rank,
            )
        return q

    q, r, _ = sla.qr(z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = 0 if diag.size == 0 or diag[0] == 0.0 else int(np.count_nonzero(diag > tol * diag[0]))
    return q[:, :rank]


def generalized_rsvd(
    a,
    cov: CovarianceOperator,
    ell: int,
    k: int,
    seed: SeedSpec,
    *,
    truncate_rank_deficient: bool = False,
    rank_a: int | None = None,
) -> GrsvdRun:
    """
    Randomized SVD with a Gaussian sketch Z ~ N(0, K) column-wise.

    Stage 1 draws Z = FΩ and orthonormalizes it (thin QR); stage 2 takes the SVD of
    Y = QᵀA, keeps k triplets and lifts Û_k = Q U_k.

    Args:
        a: m×n matrix.
        cov: sketch covariance on R^m.
        ell: sketch width.
        k: target rank, 1 <= k <= ell.
        seed: stream for Ω.
        truncate_rank_deficient: keep the numerical range of a rank-deficient Z instead of
            raising (for covariances of rank below ell).
        rank_a: rank of ``a`` when already known; computed with ``numerical_rank`` otherwise.

    Raises:
        DegeneracyError: Z is numerically rank deficient, or its range has dimension < k.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    if cov.dim != m:
        raise ParameterError(f"covariance dimension {cov.dim} does not match {m} rows of A")
    if not 1 <= k <= ell:
        raise ParameterError(f"need 1 <= k <= ell, got k={k}, ell={ell}")
    limit = numerical_rank(a) if rank_a is None else rank_a
    if ell > limit:
        raise ParameterError(f"ell={ell} exceeds rank(A)={limit}")

    z = sample_sketch(cov, ell, seed)
    q = _range_basis(z, truncate_rank_deficient)
    if q.shape[1] < k:
        raise DegeneracyError(f"sketch range has dimension {q.shape[1]} < k={k}", rank=q.shape[1])

    y = q.T @ a
    u_y, s_y, vt_y = sla.svd(y, full_matrices=False)
    factors = LowRankFactors(u_hat_k=q @ u_y[:, :k], sigma_hat_k=s_y[:k], v_hat_k=vt_y[:k].T)
    residual = float(np.linalg.norm(a - q @ y))
    truncation = float(np.linalg.norm(a - factors.reconstruct()))
    logger.debug("stream %d: residual=%.17g", seed.stream_id, residual)
    return GrsvdRun(factors, z, residual, truncation, q.shape[1])


def _fsum_stats(values: list[float]) -> tuple[float, float]:
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def empirical_error_stats(
    a,
    cov: CovarianceOperator,
    ell: int,
    k: int,
    n_runs: int,
    seed: SeedSpec,
    *,
    partition: SvdPartition | None = None,
    truncate_rank_deficient: bool = False,
    rank_a: int | None = None,
    workers: int = 1,
    verify: bool = False,
) -> ErrorStats:
    """
    Run the randomized SVD ``n_runs`` times (run i uses stream i of ``seed.base_seed``).

    Runs whose sketch is degenerate are logged, counted in ``n_failed`` and left out.
    With ``verify=True`` every run is checked against the deterministic bound
    ‖(I−π(Z))A‖² ≤ ‖Σ̄_k‖² + ‖Z̄_k Z_k⁺ Σ_k‖².

    Raises:
        DegeneracyError: every run failed.
    """
    if n_runs < 1:
        raise ParameterError(f"n_runs must be positive, got {n_runs}")
    a = as_matrix(a, "a")
    part = partition if partition is not None else svd_partition(a, k)
    if part.k != k:
        raise ParameterError(f"partition is at rank {part.k}, expected {k}")
    if rank_a is None:
        rank_a = part.rank
    if verify:
        from .oracle import deterministic_bound_check

    def one_run(i: int) -> tuple[float, float] | None:
        try:
            run = generalized_rsvd(
                a,
                cov,
                ell,
                k,
                seed.stream(i),
                truncate_rank_deficient=truncate_rank_deficient,
                rank_a=rank_a,
            )
        except DegeneracyError as exc:
            logger.warning("run %d of %d failed: %s", i, n_runs, exc)
            return None
        if verify and run.sketch_rank == ell:
            check = deterministic_bound_check(a, run.sketch, k, partition=part)
            if not check.holds:
                raise AssertionError(
                    f"deterministic bound violated on run {i}: {check.lhs_sq!r} > {check.rhs_sq!r}"
                )
        return run.residual, run.truncation_error

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_run, range(n_runs)))
    else:
        results = [one_run(i) for i in range(n_runs)]

    done = [r for r in results if r is not None]
    n_failed = n_runs - len(done)
    if not done:
        raise DegeneracyError(f"all {n_runs} runs produced a degenerate sketch")

    residuals = [r[0] for r in done]
    truncations = [r[1] for r in done]
    mean, std = _fsum_stats(residuals)
    lo, hi = min(residuals), max(residuals)
    mean = min(max(mean, lo), hi)
    trunc_mean, _ = _fsum_stats(truncations)

    opt = part.optimal_error
    scale = max(1.0, float(np.linalg.norm(a)))
    return ErrorStats(
        mean=mean,
        std_dev=std,
        min=lo,
        max=hi,
        n_runs=len(done),
        ratio_minus_one=_relative_excess(mean, opt, scale),
        n_failed=n_failed,
        optimal_error=opt,
        truncation_mean=trunc_mean,
        truncation_ratio_minus_one=_relative_excess(trunc_mean, opt, scale),
    )


def _relative_excess(value: float, optimal: float, scale: float) -> float:
    if optimal > 1e-12 * scale:
        return value / optimal - 1.0
    # exact low-rank input: the optimum is zero up to roundoff
    return 0.0 if value <= 1e-8 * scale else math.inf
