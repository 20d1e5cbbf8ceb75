"""Shared fixtures: small matrices with a prescribed spectrum and a reduced DA problem."""

import numpy as np
import pytest

from grsvdcalc.daproblem import DaScenario, assemble_da_matrix
from grsvdcalc.linalg import svd_partition
from grsvdcalc.oracle import matrix_with_spectrum, random_spd
from grsvdcalc.sampling import SeedSpec


@pytest.fixture
def gen():
    """Deterministic generator for building test instances."""
    return SeedSpec(12345).generator()


@pytest.fixture
def decaying_matrix(gen):
    """20x20 matrix with singular values 1 ... 1e-2, geometrically spaced."""
    return matrix_with_spectrum(np.geomspace(1.0, 1e-2, 20), gen)


@pytest.fixture
def decaying_partition(decaying_matrix):
    return svd_partition(decaying_matrix, 4)


@pytest.fixture
def spd_20(gen):
    return random_spd(20, gen)


@pytest.fixture
def small_da():
    """Reduced DA problem, cheap enough for every test run."""
    return assemble_da_matrix(DaScenario(n=60, m=12, gamma=10.0, name="small"))
