"""
Data-assimilation test matrices.

The Gauss-Newton system of 3D-Var, first-level preconditioned by the prior square root L,
has the SPD matrix A = I + L Hᵀ R⁻¹ H L. Here B comes from a 1-D diffusion operator,
H selects m evenly spaced grid points and R = σ_R² I.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ParameterError
from .grsvd import LowRankFactors
from .linalg import as_matrix, check_symmetric
from .sampling import CovarianceOperator

logger = logging.getLogger(__name__)

# λ₁(B)/λ₅₀(B) ≈ 1.6e2 at n = 1000, and on LowObs cond(U_kᵀ A B A U_k)
# stays below 1e12 through k = 180
DEFAULT_GAMMA = 500.0
DEFAULT_SIGMA_R = 0.1

SCENARIOS = {
    "LowObs": {"n": 1000, "m": 200},
    "HighObs": {"n": 1000, "m": 500},
}


@dataclass(frozen=True)
class DaScenario:
    n: int = 1000
    m: int = 200
    sigma_r: float = DEFAULT_SIGMA_R
    gamma: float = DEFAULT_GAMMA
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ParameterError(f"n must be at least 2, got {self.n}")
        if not 0 <= self.m <= self.n:
            raise ParameterError(f"m must lie in [0, n={self.n}], got {self.m}")
        if self.sigma_r <= 0:
            raise ParameterError(f"sigma_r must be positive, got {self.sigma_r}")
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")

    @classmethod
    def named(cls, name: str, **overrides) -> DaScenario:
        """Build one of the preset scenarios (``LowObs``, ``HighObs``) with optional overrides."""
        if name not in SCENARIOS:
            raise ParameterError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
        fields = {**SCENARIOS[name], "name": name}
        fields.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**fields)


@dataclass(frozen=True, eq=False)
class DaMatrices:
    a: np.ndarray
    b: np.ndarray
    l: np.ndarray
    h_indices: np.ndarray
    w: np.ndarray
    scenario: DaScenario

    def observation_modes(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Eigen-data of W = S_m Λ_m S_mᵀ.

        Returns:
            ``(s_m, lambda_m)`` with the m eigenvalues in nonincreasing order.
        """
        root = self.l[:, self.h_indices] / self.scenario.sigma_r
        u, s, _ = sla.svd(root, full_matrices=False)
        return u, s**2


def neumann_laplacian(n: int) -> np.ndarray:
    """Second-difference matrix with stencil (−1, 2, −1) and zero-flux ends."""
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], offsets=[-1, 0, 1]).toarray()


def _symmetric_function(mat: np.ndarray, fn) -> np.ndarray:
    lam, vecs = sla.eigh(mat)
    out = (vecs * fn(np.clip(lam, 0.0, None))) @ vecs.T
    return 0.5 * (out + out.T)


def build_prior_covariance(n: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Diffusion prior B and its symmetric square root L.

    B₀ = (I + γ L_h)⁻² is rescaled to unit diagonal, B = D B₀ D; L = B^{1/2}.

    Returns:
        ``(b, l)``.
    """
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")

    b0 = _symmetric_function(neumann_laplacian(n), lambda mu: (1.0 + gamma * mu) ** -2)
    d = 1.0 / np.sqrt(np.diag(b0))
    b = b0 * d[:, None] * d[None, :]
    b = 0.5 * (b + b.T)
    np.fill_diagonal(b, 1.0)
    l = _symmetric_function(b, np.sqrt)
    return b, l


def build_selection_operator(n: int, m: int) -> np.ndarray:
    """Indices floor(j·n/m), j = 0..m−1, of the observed grid points."""
    if not 0 <= m <= n:
        raise ParameterError(f"m must lie in [0, n={n}], got {m}")
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    return (np.arange(m, dtype=np.int64) * n) // m


def assemble_da_matrix(scenario: DaScenario) -> DaMatrices:
    b, l = build_prior_covariance(scenario.n, scenario.gamma)
    h = build_selection_operator(scenario.n, scenario.m)
    root = l[h, :] / scenario.sigma_r  # R^{-1/2} H L
    w = root.T @ root
    w = 0.5 * (w + w.T)
    a = np.eye(scenario.n) + w
    logger.info(
        "Assembled %s: n=%d m=%d sigma_r=%g gamma=%g",
        scenario.name,
        scenario.n,
        scenario.m,
        scenario.sigma_r,
        scenario.gamma,
    )
    return DaMatrices(a=a, b=b, l=l, h_indices=h, w=w, scenario=scenario)


def spectrum(mat) -> np.ndarray:
    """Eigenvalues of a symmetric matrix in nonincreasing order."""
    mat = check_symmetric(mat, 1e-8, "mat")
    return sla.eigvalsh(0.5 * (mat + mat.T))[::-1]


# -------------------------------------------------------------------
# Sketch covariance cases K = A C Aᵀ
# -------------------------------------------------------------------

COVARIANCE_CASES = {
    "I": {"label": "C=I", "needs_prior": False, "needs_pilot": False},
    "A2": {"label": "C=A^2", "needs_prior": False, "needs_pilot": False},
    "B": {"label": "C=B", "needs_prior": True, "needs_pilot": False},
    "B2": {"label": "C=B^2", "needs_prior": True, "needs_pilot": False},
    "ALPHA_BETA": {"label": "C_ab", "needs_prior": False, "needs_pilot": True},
    "L": {"label": "C_L", "needs_prior": True, "needs_pilot": True},
}


def case_label(case_id: str, alpha: float = 1.0, beta: float = 1.0) -> str:
    if case_id not in COVARIANCE_CASES:
        choices = sorted(COVARIANCE_CASES)
        raise ParameterError(f"unknown covariance case {case_id!r}; choose from {choices}")
    label = COVARIANCE_CASES[case_id]["label"]
    if COVARIANCE_CASES[case_id]["needs_pilot"]:
        label = f"{label}(alpha={alpha:g},beta={beta:g})"
    return label


def alpha_beta_factor(extra: LowRankFactors, alpha: float, beta: float) -> np.ndarray:
    """
    Factor of C_{α,β} = α V̂_kΣ̂_k²V̂_kᵀ + β(I − V̂_kV̂_kᵀ).

    β = 0 leaves only the rank-k block, giving a deterministic sketch range.
    """
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if beta < 0:
        raise ParameterError(f"beta must be nonnegative, got {beta}")
    v = extra.v_hat_k
    sigma = extra.sigma_hat_k
    if beta > alpha * float(sigma[-1]) ** 2:
        logger.warning(
            "beta=%g exceeds alpha*sigma_k^2=%g; the complement outweighs the trusted subspace",
            beta,
            alpha * float(sigma[-1]) ** 2,
        )
    head = math.sqrt(alpha) * (v * sigma)
    if beta == 0:
        return head
    complement = np.eye(v.shape[0]) - v @ v.T
    return np.hstack([head, math.sqrt(beta) * complement])


def case_factor(
    case_id: str,
    a: np.ndarray,
    *,
    b: np.ndarray | None = None,
    l: np.ndarray | None = None,
    extra: LowRankFactors | None = None,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> CovarianceOperator:
    """Factor A·F_C of K = A C Aᵀ for a registered case, given the matrices it needs."""
    label = case_label(case_id, alpha, beta)
    spec = COVARIANCE_CASES[case_id]
    a = as_matrix(a, "a")
    if spec["needs_prior"] and (b is None or l is None):
        raise ParameterError(f"case {case_id} needs the prior covariance B and its square root L")
    if spec["needs_pilot"] and extra is None:
        raise ParameterError(f"case {case_id} needs a low-rank approximation (V_k, Sigma_k)")

    if case_id == "I":
        c_factor = None
    elif case_id == "A2":
        if a.shape[0] != a.shape[1]:
            raise ParameterError("case A2 needs a square matrix")
        c_factor = a
    elif case_id == "B":
        c_factor = l
    elif case_id == "B2":
        c_factor = b
    elif case_id == "ALPHA_BETA":
        c_factor = alpha_beta_factor(extra, alpha, beta)
    else:
        c_factor = l @ alpha_beta_factor(extra, alpha, beta)

    factor = a if c_factor is None else a @ c_factor
    return CovarianceOperator(factor, label=label)


def covariance_case(
    case_id: str,
    da: DaMatrices,
    extra: LowRankFactors | None = None,
    *,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> CovarianceOperator:
    """
    Sketch covariance of one of the studied cases for the DA matrix.

    ``I`` and ``A2`` are exact power iteration with q = 1 and q = 2; ``B`` and ``B2`` use the
    prior; ``ALPHA_BETA`` and ``L`` need an available approximation ``extra``.
    """
    return case_factor(case_id, da.a, b=da.b, l=da.l, extra=extra, alpha=alpha, beta=beta)
