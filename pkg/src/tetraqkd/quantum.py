"""Dense complex linear algebra for small multi-qubit states.

Convention used throughout the package: subsystem 0 is the leftmost tensor
factor, i.e. for a basis index ``i`` of a 2**n dimensional space, qubit 0 is
the most significant bit.  All entropies and informations are in bits.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

# Structural tolerance (hermiticity, trace), positivity slack, and the looser
# tolerance for entropic identities.  Double precision with <=256-dim spectra.
ATOL_STRUCT = 1e-12
ATOL_PSD = 1e-10
ATOL_ENTROPY = 1e-9

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([PAULI_X, PAULI_Y, PAULI_Z])
ID2 = np.eye(2, dtype=complex)


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more operators or state vectors."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def pure_density(vec: np.ndarray) -> np.ndarray:
    """Projector |v><v| of a (normalized) state vector."""
    v = np.asarray(vec, dtype=complex).ravel()
    return np.outer(v, v.conj())


def num_qubits(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of 2")
    return n


def partial_trace(rho: np.ndarray, keep: Iterable[int]) -> np.ndarray:
    """Reduce a multi-qubit density operator to the subsystems in ``keep``.

    ``keep`` holds qubit indices (subsystem 0 = leftmost factor); the result
    keeps them in ascending index order.
    """
    rho = np.asarray(rho, dtype=complex)
    n = num_qubits(rho.shape[0])
    keep = sorted(set(keep))
    if not keep or any(q < 0 or q >= n for q in keep):
        raise ValueError(f"invalid subsystem set {keep} for {n} qubits")
    traced = sorted(set(range(n)) - set(keep), reverse=True)
    t = rho.reshape([2] * (2 * n))
    remaining = n
    for q in traced:
        t = np.trace(t, axis1=q, axis2=q + remaining)
        remaining -= 1
    d = 2 ** len(keep)
    return t.reshape(d, d)


def is_hermitian(op: np.ndarray, atol: float = ATOL_PSD) -> bool:
    op = np.asarray(op)
    return bool(np.max(np.abs(op - op.conj().T)) <= atol)


def eigenvalues(rho: np.ndarray, atol: float = ATOL_PSD) -> np.ndarray:
    """Real eigenvalues of a Hermitian operator, sorted descending."""
    if not is_hermitian(rho, atol):
        raise ValueError("operator is not Hermitian within tolerance")
    return np.linalg.eigvalsh(rho)[::-1]


def validate_density(rho: np.ndarray, atol: float = ATOL_STRUCT) -> np.ndarray:
    """Check hermiticity, unit trace and positivity; return the array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density operator must be a square matrix")
    if not is_hermitian(rho, atol):
        raise ValueError("density operator is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > atol or abs(np.trace(rho).imag) > atol:
        raise ValueError("density operator does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -ATOL_PSD:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Von Neumann entropy -sum(lam log2 lam) in bits, with 0 log 0 := 0."""
    lam = np.linalg.eigvalsh(np.asarray(rho, dtype=complex))
    if lam.min() < -ATOL_PSD:
        raise ValueError(f"invalid state: eigenvalue {lam.min()} < -{ATOL_PSD}")
    lam = np.clip(lam, 0.0, None)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log2(lam)))


def binary_entropy(p: float) -> float:
    """Shannon entropy of a (p, 1-p) coin, in bits."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


def shannon_mutual_information(joint: np.ndarray) -> float:
    """Mutual information of a joint probability matrix, in bits.

    Zero cells are dropped (0 log 0 := 0); entries must be nonnegative and
    sum to 1 within 1e-9.
    """
    p = np.asarray(joint, dtype=float)
    if p.min() < 0:
        raise ValueError(f"negative probability {p.min()} in joint distribution")
    if abs(p.sum() - 1.0) > ATOL_ENTROPY:
        raise ValueError(f"joint distribution sums to {p.sum()}, not 1")
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    prod = np.outer(pa, pb)
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / prod[mask])))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of a - b."""
    diff = np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def product_of_singlets(n: int, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """State vector of a product of two-qubit singlets on disjoint pairs.

    Each pair (j, k) carries (|0_j 1_k> - |1_j 0_k>)/sqrt(2); the amplitude of
    a basis index is the product over pairs.
    """
    used = [q for pair in pairs for q in pair]
    if len(set(used)) != len(used) or any(q < 0 or q >= n for q in used):
        raise ValueError(f"pairs {pairs} are not disjoint qubits of range({n})")
    s = np.array([[0, 1], [-1, 0]], dtype=complex) / math.sqrt(2)
    vec = np.zeros(2**n, dtype=complex)
    for idx in range(2**n):
        bits = [(idx >> (n - 1 - q)) & 1 for q in range(n)]
        amp = complex(1.0)
        for j, k in pairs:
            amp *= s[bits[j], bits[k]]
            if amp == 0:
                break
        vec[idx] = amp
    return vec


#: Two-qubit singlet (|01> - |10>)/sqrt(2).
SINGLET = product_of_singlets(2, [(0, 1)])
