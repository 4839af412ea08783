"""Shared generators for randomized tests.

Everything is seeded explicitly; tests never consume global RNG state.
"""

import numpy as np
import pytest

from qmetro.states import DerivedState, QuantumState


def random_unitary(rng, d: int) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng, d: int, full_rank: bool = True) -> np.ndarray:
    """Ginibre-induced density matrix, optionally floor-regularized."""
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    if full_rank:
        rho = rho + 0.1 * np.eye(d)
    return rho / np.trace(rho).real


def random_traceless_herm(rng, d: int) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = 0.5 * (g + g.conj().T)
    return h - (np.trace(h) / d) * np.eye(d)


def random_derived(rng, d: int, n: int = 1, full_rank: bool = True) -> DerivedState:
    rho = random_density(rng, d, full_rank)
    derivs = [random_traceless_herm(rng, d) for _ in range(n)]
    return DerivedState(QuantumState(rho), derivs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
