"""Tetrahedron and six-state measurements, Born-rule joints, linear inversion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quantum import ATOL_STRUCT, ID2, PAULI, validate_density

#: Canonical tetrahedron directions (cube-corner embedding).  Only the Gram
#: matrix t_k.t_l = (4/3) delta_kl - 1/3 is physical; this rotation is pinned
#: for reproducibility.
TETRA_VECTORS = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
) / math.sqrt(3)

#: Cartesian axes of the six-state measurement, ordered (+x,-x,+y,-y,+z,-z).
SIX_STATE_AXES = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=float,
)


@dataclass(frozen=True)
class Pom:
    """Probability operator measurement: ordered positive effects summing to 1."""

    label: str
    effects: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.effects)

    def validate(self, atol: float = ATOL_STRUCT) -> None:
        total = sum(self.effects)
        if np.max(np.abs(total - np.eye(total.shape[0]))) > atol:
            raise ValueError(f"effects of {self.label!r} do not sum to identity")
        for effect in self.effects:
            if np.linalg.eigvalsh(effect).min() < -atol:
                raise ValueError(f"effect of {self.label!r} is not positive")


def tetrahedron_vectors() -> np.ndarray:
    """The four unit vectors with pairwise dot product -1/3."""
    return TETRA_VECTORS.copy()


def _bloch_effect(vector: np.ndarray, weight: float) -> np.ndarray:
    return weight * (ID2 + np.tensordot(vector, PAULI, axes=1))


def tetra_pom() -> Pom:
    """Four half-projectors (1 + t_k.sigma)/4 of the minimal qubit measurement."""
    return Pom("tetra", tuple(_bloch_effect(t, 0.25) for t in TETRA_VECTORS))


def six_state_pom() -> Pom:
    """Six effects (1 +/- e.sigma)/6 along the Cartesian axes."""
    return Pom("six", tuple(_bloch_effect(a, 1.0 / 6.0) for a in SIX_STATE_AXES))


def joint_distribution(rho: np.ndarray, pom_a: Pom, pom_b: Pom) -> np.ndarray:
    """Outcome matrix p_kl = tr[rho (A_k x B_l)] for a two-qubit state.

    Entries within -1e-12 of zero are clamped to zero.
    """
    rho = validate_density(rho)
    if rho.shape[0] != 4:
        raise ValueError("joint_distribution expects a two-qubit state")
    p = np.empty((len(pom_a), len(pom_b)))
    for k, ak in enumerate(pom_a.effects):
        for l, bl in enumerate(pom_b.effects):
            val = np.trace(rho @ np.kron(ak, bl))
            p[k, l] = val.real
    if p.min() < -ATOL_STRUCT:
        raise ValueError(f"joint probability {p.min()} below clamping tolerance")
    return np.clip(p, 0.0, None)


def marginals(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row (first party) and column (second party) marginals."""
    p = np.asarray(p, dtype=float)
    return p.sum(axis=1), p.sum(axis=0)


def reconstruct_state(p: np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert a 4x4 tetrahedron joint distribution back to the two-qubit state.

    Returns ``(rho, positive)``.  The inversion is exact linear algebra, so
    noisy frequencies may give a non-positive operator; it is returned as-is
    with ``positive=False`` and any regularization left to the caller.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (4, 4):
        raise ValueError(f"expected a 4x4 distribution, got shape {p.shape}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"distribution sums to {p.sum()}, not 1")
    duals = [6 * effect - ID2 for effect in tetra_pom().effects]
    rho = np.zeros((4, 4), dtype=complex)
    for k in range(4):
        for l in range(4):
            rho += p[k, l] * np.kron(duals[k], duals[l])
    positive = bool(np.linalg.eigvalsh(rho).min() >= -1e-10)
    return rho, positive
