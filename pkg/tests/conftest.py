import numpy as np
import pytest


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random full-rank density operator from the Ginibre ensemble."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_pure(rng: np.random.Generator, dim: int) -> np.ndarray:
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return vec / np.linalg.norm(vec)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)
