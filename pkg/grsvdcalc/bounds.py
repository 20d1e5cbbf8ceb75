"""
Error bounds for the generalized randomized SVD.

Everything here is driven by two coefficients of the sketch covariance K:

* τ_k(K) = ‖tanmat(U_k, K U_k) Σ_k‖_F / ‖Σ̄_k‖_F, the misalignment of range(K U_k)
  with range(U_k);
* ρ_k(K) = ‖(I − π(K^{1/2} U_k)) K^{1/2}‖_F · √tr(Σ_k² K_k⁻¹) / ‖Σ̄_k‖_F with K_k = U_kᵀ K U_k.

From them come the expectation and probability bounds, the power-iteration and
generalized-RSVD specializations, and the Halko / Gu reference bounds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import DegeneracyError, HypothesisError, InfeasibleError, ParameterError
from .linalg import SvdPartition, as_matrix, check_symmetric, rank_tolerance, tangent_matrix
from .sampling import CovarianceOperator, covariance_from_factor, covariance_from_matrix

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
EXPECTATION_MIN_OVERSAMPLING = 2
PROBABILITY_MIN_OVERSAMPLING = 4

# (u, t) search grid
UT_GRID_POINTS = 400
U_RANGE = (1.0, 12.0)
T_RANGE = (1.0, 100.0)


@dataclass(frozen=True)
class BoundCoefficients:
    """
    τ_k and ρ_k together with the raw norms they are built from.

    ``tangent_norm``, ``projection_norm`` and ``trace_norm`` are the unnormalized factors:
    τ_k = tangent_norm / ‖Σ̄_k‖_F and ρ_k = projection_norm · trace_norm / ‖Σ̄_k‖_F.
    """

    tau_k: float
    rho_k: float
    k: int
    ell: int | None
    cond_K_k: float
    optimal_error: float
    tangent_norm: float
    projection_norm: float
    trace_norm: float

    def with_ell(self, ell: int) -> BoundCoefficients:
        return replace(self, ell=ell)

    def core_expectation(self, ell: int | None = None) -> float:
        """Closed form of E‖Z̄_k Z_k⁺ Σ_k‖_F² for a sketch with ``ell`` columns."""
        ell = _resolve_ell(self, ell)
        p = ell - self.k
        if p < EXPECTATION_MIN_OVERSAMPLING:
            raise HypothesisError(f"expectation needs k <= ell-2 (k={self.k}, ell={ell})")
        spread = (self.projection_norm * self.trace_norm) ** 2
        return self.tangent_norm**2 + spread / (p - 1)


@dataclass(frozen=True)
class BoundReport:
    """Expectation and probability bounds at one (k, ℓ)."""

    expectation_bound: float
    probability_bound: float | None
    u: float | None
    t: float | None
    delta: float
    optimal_error: float
    k: int
    ell: int

    @property
    def expectation_ratio(self) -> float:
        return _ratio_minus_one(self.expectation_bound, self.optimal_error)

    @property
    def probability_ratio(self) -> float | None:
        if self.probability_bound is None:
            return None
        return _ratio_minus_one(self.probability_bound, self.optimal_error)


@dataclass(frozen=True)
class BaselineBounds:
    """Halko probability bound and Gu expectation bound, restated in our notation."""

    halko_prob: float
    gu_expect: float
    gu_factor_c: float
    gu_factor_lower: float
    gu_factor_floor: float


# -------------------------------------------------------------------
# Helpers
# -------------------------------------------------------------------


def _ratio_minus_one(value: float, optimal: float) -> float:
    if optimal > 0:
        return value / optimal - 1.0
    return 0.0 if value == 0 else math.inf


def _normalized(value: float, optimal: float) -> float:
    if optimal > 0:
        return value / optimal
    return 0.0 if value <= 1e-300 else math.inf


def _resolve_ell(coeffs: BoundCoefficients, ell: int | None) -> int:
    ell = coeffs.ell if ell is None else ell
    if ell is None:
        raise ParameterError("ell is required (not stored in the coefficients)")
    if ell < coeffs.k:
        raise ParameterError(f"ell must be >= k, got ell={ell}, k={coeffs.k}")
    return ell


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")


def _check_conditioning(mat: np.ndarray, what: str) -> float:
    cond = float(np.linalg.cond(mat))
    if not math.isfinite(cond) or cond > MAX_CONDITION:
        raise HypothesisError(f"{what} is singular at working precision (condition {cond:.3e})")
    return cond


def _range_residual_norm(basis_source: np.ndarray, target: np.ndarray) -> float:
    """‖(I − π(basis_source)) target‖_F for a full-column-rank ``basis_source``."""
    q, _ = sla.qr(basis_source, mode="economic")
    return float(np.linalg.norm(target - q @ (q.T @ target)))


def _trace_of_inverse_product(gram: np.ndarray, weights: np.ndarray) -> float:
    """tr(diag(weights) gram⁻¹) for a symmetric positive definite ``gram``."""
    solved = sla.solve(gram, np.diag(weights), assume_a="sym")
    return float(np.trace(solved))


def _tangent(m_basis: np.ndarray, n_mat: np.ndarray, complement: np.ndarray) -> np.ndarray:
    try:
        return tangent_matrix(m_basis, n_mat, complement=complement)
    except DegeneracyError as exc:
        raise HypothesisError(str(exc)) from exc


def _factor_conditioning(g: np.ndarray) -> float:
    """cond(GGᵀ) from the singular values of the k×r factor G, without forming GGᵀ."""
    if g.shape[1] < g.shape[0]:
        raise HypothesisError(
            f"K_k = U_kᵀ K U_k has rank at most {g.shape[1]} < k={g.shape[0]}"
        )
    s = sla.svdvals(g)
    cond = math.inf if s[-1] == 0.0 else float(s[0] / s[-1]) ** 2
    if not math.isfinite(cond) or cond > MAX_CONDITION:
        raise HypothesisError(
            f"K_k = U_kᵀ K U_k is singular at working precision (condition {cond:.3e})"
        )
    return cond


# -------------------------------------------------------------------
# Coefficients
# -------------------------------------------------------------------


def coefficients_tau_rho(
    part: SvdPartition, cov: CovarianceOperator, *, ell: int | None = None
) -> BoundCoefficients:
    """
    τ_k(K) and ρ_k(K) for the partition ``part``.

    With F the covariance factor, G = U_kᵀF and Ḡ = Ū_kᵀF give K_k = GGᵀ and
    K_⊥ = ḠGᵀ. The projection factor of ρ_k is evaluated as ‖(I − π(Gᵀ))Ḡᵀ‖_F, whose
    square is tr(K) − tr(K_k⁻¹ U_kᵀK²U_k); no square root of K is formed.

    K_k is never formed: the tangent K_⊥K_k⁻¹ equals ḠG⁺ and tr(Σ_k²K_k⁻¹) equals
    ‖G⁺Σ_k‖_F², both taken from least-squares solves against G. Working on G keeps
    the accuracy of cond(G) = cond(K_k)^{1/2}, so K_k stays usable up to the 1e12 limit.

    Raises:
        HypothesisError: K_k has condition number above 1e12.
    """
    f = cov.factor
    if f.shape[0] != part.u_k.shape[0]:
        raise ParameterError(
            f"covariance dimension {f.shape[0]} does not match {part.u_k.shape[0]} rows of A"
        )
    g = part.u_k.T @ f
    g_bar = part.u_bar_k.T @ f
    cond = _factor_conditioning(g)

    # ḠG⁺ = (G⁺ᵀḠᵀ)ᵀ, the least-squares solution of Gᵀ X = Ḡᵀ
    if g_bar.shape[0]:
        tan = sla.lstsq(g.T, g_bar.T)[0].T
        tangent_norm = float(np.linalg.norm(tan * part.sigma_k))
    else:
        tangent_norm = 0.0
    projection_norm = _range_residual_norm(g.T, g_bar.T)
    trace_norm = float(np.linalg.norm(sla.lstsq(g, np.diag(part.sigma_k))[0]))

    opt = part.optimal_error
    coeffs = BoundCoefficients(
        tau_k=_normalized(tangent_norm, opt),
        rho_k=_normalized(projection_norm * trace_norm, opt),
        k=part.k,
        ell=ell,
        cond_K_k=cond,
        optimal_error=opt,
        tangent_norm=tangent_norm,
        projection_norm=projection_norm,
        trace_norm=trace_norm,
    )
    logger.debug("k=%d tau=%.6g rho=%.6g cond(K_k)=%.3e", part.k, coeffs.tau_k, coeffs.rho_k, cond)
    return coeffs


# -------------------------------------------------------------------
# Main bounds
# -------------------------------------------------------------------


@lru_cache(maxsize=1024)
def solve_ut(ell: int, k: int, delta: float) -> tuple[float, float]:
    """
    Smallest u·t on a 400×400 log grid with exp(−u²/2) + t^(−(ℓ−k)) ≤ delta.

    u ranges over [1, 12] and t over [1, 100]. Ties go to the smaller u.

    Raises:
        InfeasibleError: no grid point meets the budget.
    """
    p = ell - k
    if p < PROBABILITY_MIN_OVERSAMPLING:
        raise ParameterError(f"solve_ut needs ell-k >= 4, got {p}")
    _check_delta(delta)

    u = np.geomspace(*U_RANGE, UT_GRID_POINTS)
    t = np.geomspace(*T_RANGE, UT_GRID_POINTS)
    failure = np.exp(-(u**2) / 2.0)[:, None] + t[None, :] ** (-float(p))
    feasible = failure <= delta
    if not feasible.any():
        raise InfeasibleError(f"no (u, t) on the grid achieves failure probability {delta:g}")

    product = np.where(feasible, u[:, None] * t[None, :], np.inf)
    i, j = np.unravel_index(np.argmin(product), product.shape)
    logger.debug("solve_ut(ell=%d, k=%d, delta=%g) -> u=%.4f t=%.4f", ell, k, delta, u[i], t[j])
    return float(u[i]), float(t[j])


def _probability_parameters(
    k: int, ell: int, delta: float, require_probability: bool
) -> tuple[float, float] | None:
    p = ell - k
    if p < EXPECTATION_MIN_OVERSAMPLING:
        raise HypothesisError(f"expectation bound unavailable: needs k <= ell-2 (k={k}, ell={ell})")
    if p < PROBABILITY_MIN_OVERSAMPLING:
        if require_probability:
            raise HypothesisError(
                f"probability bound unavailable: needs k <= ell-4 (k={k}, ell={ell})"
            )
        return None
    if require_probability:
        return solve_ut(ell, k, delta)
    try:
        return solve_ut(ell, k, delta)
    except InfeasibleError as exc:
        logger.info("probability bound unavailable: %s", exc)
        return None


def theorem_bounds(
    coeffs: BoundCoefficients,
    part: SvdPartition,
    delta: float,
    *,
    ell: int | None = None,
    require_probability: bool = True,
) -> BoundReport:
    """
    Expectation and probability bounds of the general covariance theorem.

    expectation: (1 + τ² + ρ²/(ℓ−k−1))^{1/2} ‖Σ̄_k‖_F
    probability: (1 + τ + √3 u t ρ / √(ℓ−k+1)) ‖Σ̄_k‖_F, failure ≤ delta

    With ``require_probability=False`` the probability fields are None when k > ℓ−4 or no
    (u, t) meets ``delta``, instead of raising.
    """
    ell = _resolve_ell(coeffs, ell)
    _check_delta(delta)
    k = coeffs.k
    p = ell - k
    ut = _probability_parameters(k, ell, delta, require_probability)

    opt = part.optimal_error
    spread = coeffs.projection_norm * coeffs.trace_norm
    expectation = math.sqrt(opt**2 + coeffs.tangent_norm**2 + spread**2 / (p - 1))

    probability = u = t = None
    if ut is not None:
        u, t = ut
        probability = opt + coeffs.tangent_norm + math.sqrt(3.0) * u * t * spread / math.sqrt(p + 1)

    return BoundReport(
        expectation_bound=expectation,
        probability_bound=probability,
        u=u,
        t=t,
        delta=delta,
        optimal_error=opt,
        k=k,
        ell=ell,
    )


# -------------------------------------------------------------------
# Power iteration
# -------------------------------------------------------------------


def power_covariance(a, q: int) -> CovarianceOperator:
    """Covariance K = A(AᵀA)^{2q}Aᵀ of the sketch Z = A(AᵀA)^q G, as the factor (AAᵀ)^q A."""
    if q < 0:
        raise ParameterError(f"q must be nonnegative, got {q}")
    a = as_matrix(a, "a")
    factor = a
    for _ in range(q):
        factor = a @ (a.T @ factor)
    return covariance_from_factor(factor, label=f"power(q={q})")


def power_iteration_bounds(
    part: SvdPartition,
    q: int,
    ell: int,
    delta: float,
    *,
    require_probability: bool = True,
) -> BoundReport:
    """Bounds for K = A(AᵀA)^{2q}Aᵀ, driven by the gap ratio (σ_{k+1}/σ_k)^{2q}."""
    if q < 0:
        raise ParameterError(f"q must be nonnegative, got {q}")
    _check_delta(delta)
    k = part.k
    sigma_k = float(part.sigma_k[-1])
    tol = rank_tolerance(part.shape, float(part.sigma_k[0]))
    if sigma_k <= tol:
        rank = int(np.count_nonzero(part.sigma_k > tol))
        raise DegeneracyError(f"sigma_k = 0: A has rank below k={k}", rank=rank)
    decay = (part.sigma_next / sigma_k) ** (2 * q)
    ut = _probability_parameters(k, ell, delta, require_probability)

    p = ell - k
    opt = part.optimal_error
    expectation = (1.0 + decay * math.sqrt(k / (p - 1))) * opt
    probability = u = t = None
    if ut is not None:
        u, t = ut
        probability = (1.0 + math.sqrt(3.0) * u * t * decay * math.sqrt(k / (p + 1))) * opt

    return BoundReport(
        expectation_bound=expectation,
        probability_bound=probability,
        u=u,
        t=t,
        delta=delta,
        optimal_error=opt,
        k=k,
        ell=ell,
    )


def optimal_covariance(part: SvdPartition, delta_k) -> CovarianceOperator:
    """K = U_k Δ U_kᵀ for an SPD k×k matrix Δ; τ_k and ρ_k both vanish for it."""
    delta_k = check_symmetric(delta_k, 1e-8, "delta_k")
    if delta_k.shape != (part.k, part.k):
        raise ParameterError(f"delta_k must be {part.k}x{part.k}, got {delta_k.shape}")
    chol = sla.cholesky(delta_k, lower=True)
    return covariance_from_factor(part.u_k @ chol, label="U_k D U_k^T")


# -------------------------------------------------------------------
# Generalized RSVD: Z = A G' with G' ~ N(0, C)
# -------------------------------------------------------------------


@dataclass(frozen=True)
class _GeneralizedTerms:
    coeffs: BoundCoefficients
    inverse_trace: float
    lambda_max: float


def _generalized_terms(part: SvdPartition, c_mat, ell: int | None) -> _GeneralizedTerms:
    c_mat = check_symmetric(c_mat, 1e-8, "c_mat")
    n = part.v_k.shape[0]
    if c_mat.shape != (n, n):
        raise ParameterError(f"C must be {n}x{n}, got {c_mat.shape}")

    h = covariance_from_matrix(c_mat, label="C").factor
    hv = h.T @ part.v_k
    m_k = hv.T @ hv
    cond = _check_conditioning(m_k, "V_kᵀ C V_k")

    tan = _tangent(part.v_k, c_mat @ part.v_k, part.v_bar_k)
    s_bar = part.sigma_bar_k
    tangent_norm = float(np.linalg.norm(tan[: s_bar.size] * s_bar[:, None]))

    # Rows of A along V_k are annihilated by the projector; only the tail survives.
    tail = h.T @ (part.v_bar_k[:, : s_bar.size] * s_bar)
    projection_norm = _range_residual_norm(hv, tail)
    inverse_trace = _trace_of_inverse_product(m_k, np.ones(part.k))
    trace_norm = math.sqrt(max(inverse_trace, 0.0))

    opt = part.optimal_error
    coeffs = BoundCoefficients(
        tau_k=_normalized(tangent_norm, opt),
        rho_k=_normalized(projection_norm * trace_norm, opt),
        k=part.k,
        ell=ell,
        cond_K_k=cond,
        optimal_error=opt,
        tangent_norm=tangent_norm,
        projection_norm=projection_norm,
        trace_norm=trace_norm,
    )
    lambda_max = float(sla.eigvalsh(c_mat)[-1])
    return _GeneralizedTerms(coeffs=coeffs, inverse_trace=inverse_trace, lambda_max=lambda_max)


def grsvd_coefficients(part: SvdPartition, c_mat, *, ell: int | None = None) -> BoundCoefficients:
    """
    τ_k and ρ_k of K = A C Aᵀ expressed through C and the right singular vectors.

    τ_k = ‖Σ̄_k tanmat(V_k, C V_k)‖_F / ‖Σ̄_k‖_F and
    ρ_k = ‖(I − π(C^{1/2}V_k)) C^{1/2}Aᵀ‖_F · √tr((V_kᵀCV_k)⁻¹) / ‖Σ̄_k‖_F.
    """
    return _generalized_terms(part, c_mat, ell).coeffs


def grsvd_bounds(
    part: SvdPartition, c_mat, ell: int, delta: float
) -> tuple[BoundReport, float, float]:
    """
    Relaxed bounds for the generalized RSVD in terms of β_k(C) and γ_k(C).

    Returns:
        ``(report, beta_k, gamma_k)``.
    """
    _check_delta(delta)
    terms = _generalized_terms(part, c_mat, ell)
    c_mat = as_matrix(c_mat, "c_mat")
    k = part.k
    opt = part.optimal_error
    if opt <= 0.0:
        raise HypothesisError("beta_k is undefined when the optimal error is zero")
    if terms.lambda_max <= 0.0:
        raise HypothesisError("C has no positive eigenvalue")

    s_bar = part.sigma_bar_k
    tail_basis = part.v_bar_k[:, : s_bar.size]
    weighted = np.einsum("ij,ij->j", tail_basis, c_mat @ tail_basis)
    beta_k = float(np.sum(s_bar**2 * weighted)) / (terms.lambda_max * opt**2)
    gamma_k = k / (terms.lambda_max * terms.inverse_trace)

    ut = _probability_parameters(k, ell, delta, require_probability=True)
    u, t = ut
    p = ell - k
    ratio = beta_k / gamma_k
    expectation = (1.0 + math.sqrt(p) * math.sqrt(k / (p - 1) * ratio)) * opt
    probability = (
        1.0 + math.sqrt(3.0) * (math.sqrt(p + 1) + 1.0) * math.sqrt(k / (p + 1) * ratio) * u * t
    ) * opt
    report = BoundReport(
        expectation_bound=expectation,
        probability_bound=probability,
        u=u,
        t=t,
        delta=delta,
        optimal_error=opt,
        k=k,
        ell=ell,
    )
    return report, beta_k, gamma_k


# -------------------------------------------------------------------
# Reference bounds
# -------------------------------------------------------------------


def baseline_bounds(part: SvdPartition, q: int, ell: int, u: float, t: float) -> BaselineBounds:
    """
    Halko's probability bound (q = 0 form) and Gu's expectation bound with its factor c.

    ``gu_factor_lower`` is (4e/3)(ℓ−k−1) as printed alongside the comparison;
    ``gu_factor_floor`` = 4e(ℓ−k−1)/(ℓ−k+1) is the lower bound on c that holds for every
    instance, using σ_{k+1}/‖Σ̄_k‖_F ≥ 1/√(n−k).
    """
    if q < 0:
        raise ParameterError(f"q must be nonnegative, got {q}")
    k = part.k
    n = part.v_k.shape[0]
    p = ell - k
    if p < 1:
        raise ParameterError(f"baselines need ell > k, got ell={ell}, k={k}")
    if u < 1.0 or t < 1.0:
        raise ParameterError(f"u and t must be >= 1, got u={u}, t={t}")

    opt = part.optimal_error
    s_next = part.sigma_next
    s_k = float(part.sigma_k[-1])
    tail = max(n - k, 1)
    # flat-tail limit when the tail vanishes
    tail_ratio = s_next / opt if opt > 0 else 1.0 / math.sqrt(tail)
    decay = (s_next / s_k) ** (2 * q) if s_k > 0 else 1.0

    halko = (1.0 + t * math.sqrt(3.0 * k / (p + 1))) * opt
    halko += u * t * math.e * math.sqrt(ell) / math.sqrt(p + 1) * s_next
    gu_scale = 4.0 * math.e * math.sqrt(ell) / (p + 1) * (math.sqrt(n - k) + math.sqrt(ell) + 7.0)
    gu_expect = (1.0 + math.sqrt(k) * decay * gu_scale * tail_ratio) * opt
    gu_factor_c = gu_scale * math.sqrt(p - 1) * tail_ratio

    return BaselineBounds(
        halko_prob=halko,
        gu_expect=gu_expect,
        gu_factor_c=gu_factor_c,
        gu_factor_lower=4.0 * math.e / 3.0 * (p - 1),
        gu_factor_floor=4.0 * math.e * (p - 1) / (p + 1),
    )
