"""Noisy singlet source: states, purification, sampling and twirling.

The source emits qubit pairs in the singlet state with an admixture epsilon
of unbiased noise.  Measured through the tetrahedron POM on both sides, the
letter pairs follow the two-orbit cell distribution with diagonal mass
epsilon/16 per cell and off-diagonal mass (4-epsilon)/48 per cell.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .quantum import SINGLET, product_of_singlets, pure_density

LETTERS = "ABCD"

#: All 24 permutations of the four letters, lexicographic; index 0 is identity.
PERMUTATIONS = np.array(list(itertools.permutations(range(4))), dtype=np.uint8)

#: Separability bound of the noisy singlet: no quantum correlations beyond it.
SEPARABLE_EPSILON = 2.0 / 3.0


@dataclass(frozen=True)
class NoiseModel:
    """Unbiased-noise admixture of the pair source."""

    epsilon: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon {self.epsilon} outside [0, 1)")

    @property
    def nonseparable(self) -> bool:
        return self.epsilon < SEPARABLE_EPSILON


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream: identical (seed, stream) => identical draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence((self.seed, self.stream)))


def _as_generator(rng: "RngStream | np.random.Generator") -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def _check_epsilon(epsilon: float) -> float:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    return float(epsilon)


def noisy_singlet(epsilon: float) -> np.ndarray:
    """(1-eps)|s><s| + eps/4 on two qubits."""
    eps = _check_epsilon(epsilon)
    return (1 - eps) * pure_density(SINGLET) + eps / 4 * np.eye(4)


def purification(epsilon: float) -> np.ndarray:
    """Four-qubit purification of the noisy singlet.

    Qubits 0,1 go to Alice and Bob, qubits 2,3 form the eavesdropper's
    ancilla pair.  The two singlet-product branches are non-orthogonal; the
    phase i on the noise branch keeps the state normalized for every epsilon.
    """
    eps = _check_epsilon(epsilon)
    main = product_of_singlets(4, [(0, 1), (2, 3)])
    cross = product_of_singlets(4, [(0, 2), (1, 3)])
    return np.sqrt(1 - eps) * main + 1j * np.sqrt(eps) * cross


def pair_cell_probabilities(epsilon: float) -> np.ndarray:
    """The 16-cell letter-pair distribution of the twirled noisy source."""
    eps = _check_epsilon(epsilon)
    p = np.full((4, 4), (4 - eps) / 48.0)
    np.fill_diagonal(p, eps / 16.0)
    return p


def conditioned_ancilla(epsilon: float, k: int) -> tuple[float, np.ndarray]:
    """Eve's two-qubit state conditioned on Alice's outcome ``k`` (0-3).

    Returns (outcome probability, normalized 4-dim state).  The state has
    rank 2 with eigenvalues 1 - eps/2 and eps/2, independent of k up to a
    unitary.
    """
    from .quantum import partial_trace
    from .tomography import tetra_pom  # local import to avoid a cycle

    if k not in range(4):
        raise ValueError(f"outcome index {k} outside 0..3")
    psi = purification(epsilon)
    effect = np.kron(tetra_pom().effects[k], np.eye(8))
    reduced = partial_trace(effect @ pure_density(psi), keep=(2, 3))
    prob = float(np.trace(reduced).real)
    return prob, reduced / prob


def sample_pairs(
    epsilon: float, n: int, rng: "RngStream | np.random.Generator"
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n i.i.d. letter pairs from the 16-cell distribution.

    Cells are sampled directly from the categorical distribution; this is
    statistically identical to simulating the two measurements and faster.
    """
    if n < 1:
        raise ValueError("need at least one pair")
    probs = pair_cell_probabilities(epsilon).ravel()
    gen = _as_generator(rng)
    cells = gen.choice(16, size=n, p=probs)
    return (cells // 4).astype(np.uint8), (cells % 4).astype(np.uint8)


def sample_pairs_partitioned(
    epsilon: float, plan: "list[tuple[RngStream, int]]"
) -> tuple[np.ndarray, np.ndarray]:
    """Sample according to a (stream, count) plan and concatenate in order.

    Chunks may be produced on separate tasks; the merged output depends only
    on the plan, so a partitioned run equals the sequential one.
    """
    parts = [sample_pairs(epsilon, count, stream) for stream, count in plan]
    alice = np.concatenate([a for a, _ in parts])
    bob = np.concatenate([b for _, b in parts])
    return alice, bob


def apply_shared_permutations(
    alice: np.ndarray, bob: np.ndarray, perm_indices: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Relabel both letters at each position by the same S4 permutation."""
    if len(alice) != len(bob) or len(alice) != len(perm_indices):
        raise ValueError("sequences and permutation log must have equal length")
    table = PERMUTATIONS[perm_indices]
    return (
        table[np.arange(len(alice)), alice],
        table[np.arange(len(bob)), bob],
    )


def twirl(
    alice: np.ndarray, bob: np.ndarray, rng: "RngStream | np.random.Generator"
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetrize letter statistics by a random joint relabeling per position.

    One permutation per position is drawn from the shared public stream and
    applied to both letters, which preserves coincidences and reveals nothing
    about the letter values.  Returns the relabeled sequences and the
    permutation log.
    """
    if len(alice) != len(bob):
        raise ValueError("sequences must have equal length")
    gen = _as_generator(rng)
    perm_indices = gen.integers(0, len(PERMUTATIONS), size=len(alice))
    a2, b2 = apply_shared_permutations(alice, bob, perm_indices)
    return a2, b2, perm_indices


def letters_to_string(seq: np.ndarray) -> str:
    """Serialize a letter sequence to a string over 'ABCD'."""
    return "".join(LETTERS[v] for v in np.asarray(seq))


def string_to_letters(text: str) -> np.ndarray:
    """Parse a string over 'ABCD' into a letter sequence."""
    try:
        return np.array([LETTERS.index(c) for c in text], dtype=np.uint8)
    except ValueError:
        raise ValueError(f"letter string contains characters outside {LETTERS!r}")
