"""Seeded Gaussian sketches with a prescribed covariance K = F Fᵀ."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NotPSDError, ParameterError
from .linalg import as_matrix, check_symmetric

logger = logging.getLogger(__name__)

MAX_UINT64 = 2**64 - 1


@dataclass(frozen=True)
class SeedSpec:
    """
    Key of one random stream.

    Streams are Philox generators seeded from ``SeedSequence(base_seed, spawn_key=(stream_id,))``,
    so distinct ``(base_seed, stream_id)`` pairs are independent and any stream can be rebuilt
    without replaying the others.
    """

    base_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("base_seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) <= MAX_UINT64:
                raise ParameterError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.base_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))

    def stream(self, stream_id: int) -> SeedSpec:
        return SeedSpec(self.base_seed, stream_id)

    def derive(self, *keys: int) -> SeedSpec:
        """A new base seed for the namespace ``keys`` (stream 0)."""
        seq = np.random.SeedSequence(entropy=self.base_seed, spawn_key=tuple(int(k) for k in keys))
        return SeedSpec(int(seq.generate_state(1, np.uint64)[0]), 0)


@dataclass(frozen=True, eq=False)
class CovarianceOperator:
    """Sketch covariance held as a factor: K = factor · factorᵀ."""

    factor: np.ndarray
    label: str = "K"

    def __post_init__(self) -> None:
        object.__setattr__(self, "factor", as_matrix(self.factor, "factor"))

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    @property
    def width(self) -> int:
        """Column count of the factor, an upper bound on rank(K)."""
        return self.factor.shape[1]

    def matrix(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def trace(self) -> float:
        return float(np.sum(self.factor**2))

    def scaled(self, c: float) -> CovarianceOperator:
        if c <= 0:
            raise ParameterError(f"scale must be positive, got {c}")
        return CovarianceOperator(math.sqrt(c) * self.factor, label=f"{c:g}*{self.label}")


def covariance_from_factor(factor, label: str = "K") -> CovarianceOperator:
    return CovarianceOperator(as_matrix(factor, "factor"), label=label)


def covariance_from_matrix(k_mat, label: str = "K") -> CovarianceOperator:
    """
    Factor an explicit covariance through its symmetric eigendecomposition.

    Eigenvalues in [-1e-6 λ_max, 0) are clipped to zero.

    Raises:
        ParameterError: ``k_mat`` is not symmetric within 1e-8.
        NotPSDError: an eigenvalue lies below -1e-6 λ_max.
    """
    k_mat = check_symmetric(k_mat, 1e-8, "k_mat")
    lam, vecs = sla.eigh(0.5 * (k_mat + k_mat.T))
    lam_max = max(float(lam[-1]), 0.0) if lam.size else 0.0
    if lam.size and lam[0] < -1e-6 * lam_max:
        raise NotPSDError(f"covariance has eigenvalue {lam[0]:.3e} (lambda_max {lam_max:.3e})")
    lam = np.clip(lam, 0.0, None)
    return CovarianceOperator(vecs * np.sqrt(lam), label=label)


def sample_sketch(cov: CovarianceOperator, ell: int, seed: SeedSpec) -> np.ndarray:
    """Draw Z = F Ω with Ω standard normal, so the columns of Z are i.i.d. N(0, K)."""
    if ell < 1:
        raise ParameterError(f"ell must be positive, got {ell}")
    omega = seed.generator().standard_normal((cov.width, ell))
    return cov.factor @ omega
