"""Security quantities: mutual informations, noise duality, Holevo bounds.

All closed forms are cross-checked elsewhere against the generic Born-rule
path; logarithms are base 2 and 0 log 0 := 0 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.optimize import brentq

from .quantum import binary_entropy, von_neumann_entropy
from .source import (
    SEPARABLE_EPSILON,
    conditioned_ancilla,
    noisy_singlet,
    pair_cell_probabilities,
    purification,
)
from .tomography import tetra_pom

AttackKind = Literal["iteration", "finalPairing", "renesL1"]

#: Csiszar-Koerner threshold 1/(5/2 + sqrt(3)), the fixed point of the noise duality.
CK_THRESHOLD = 1.0 / (2.5 + math.sqrt(3.0))


@dataclass(frozen=True)
class ThresholdReport:
    """Root-found noise threshold with bracketing metadata."""

    name: str
    threshold: float
    bracket: tuple[float, float]
    tolerance: float
    reference: float | None = None
    source: str = ""

    @property
    def delta(self) -> float | None:
        if self.reference is None:
            return None
        return self.threshold - self.reference


@dataclass(frozen=True)
class SecurityCurve:
    """Named quantity evaluated on a strictly increasing epsilon grid."""

    name: str
    grid: tuple[tuple[float, float], ...]


def solve_threshold(
    f: Callable[[float], float],
    bracket: tuple[float, float],
    name: str = "threshold",
    tolerance: float = 1e-9,
    reference: float | None = None,
    source: str = "",
) -> ThresholdReport:
    """Root of f on a sign-changing bracket, via Brent's method."""
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi >= 0:
        raise ValueError(f"no sign change for {name!r} on [{lo}, {hi}]")
    root = float(brentq(f, lo, hi, xtol=tolerance))
    return ThresholdReport(name, root, bracket, tolerance, reference, source)


def mutual_info_tetra(epsilon: float) -> float:
    """Alice-Bob mutual information of the tetrahedron measurement, in bits."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    value = (1 - epsilon / 4) * math.log2((4 - epsilon) / 3)
    if epsilon > 0:
        value += (epsilon / 4) * math.log2(epsilon)
    return value


def mutual_info_six(epsilon: float) -> float:
    """Alice-Bob mutual information of the six-state measurement, in bits."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    value = ((2 - epsilon) / 6) * math.log2(2 - epsilon)
    if epsilon > 0:
        value += (epsilon / 6) * math.log2(epsilon)
    return value


def eve_noise(epsilon: float) -> float:
    """Effective noise eta of the Alice-Eve channel for source noise epsilon."""
    if not 0.0 <= epsilon <= SEPARABLE_EPSILON:
        raise ValueError(f"epsilon {epsilon} outside [0, 2/3]")
    return (math.sqrt(1 - 0.75 * epsilon) - math.sqrt(0.75 * epsilon)) ** 2


def eve_noise_inverse(eta: float) -> float:
    """Source noise recovered from eta through the circle identity."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta {eta} outside [0, 1]")
    return (2.0 / 3.0) * (1.0 - math.sqrt(max(0.0, 1.0 - (1.0 - eta) ** 2)))


def ck_yield(epsilon: float) -> float:
    """One-way secret-key yield I_AB - I_AE against the mixed-state attack."""
    return mutual_info_tetra(epsilon) - mutual_info_tetra(eve_noise(epsilon))


def ck_threshold() -> ThresholdReport:
    """Noise level where I_AB = I_AE; analytically 1/(5/2 + sqrt(3))."""
    return solve_threshold(
        ck_yield,
        bracket=(0.1, 0.4),
        name="ck",
        reference=CK_THRESHOLD,
        source="closed form",
    )


def holevo_bound_oneway(epsilon: float) -> float:
    """Eve's Holevo bound for one-way key generation, closed form.

    The unconditioned ancilla pair has the noisy-singlet spectrum and every
    conditioned ancilla the spectrum (1 - eps/2, eps/2), for either
    measurement, so the bound is common to the four- and six-outcome cases.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    lam = [1 - 0.75 * epsilon] + [epsilon / 4] * 3
    s_total = -sum(x * math.log2(x) for x in lam if x > 0)
    return s_total - binary_entropy(epsilon / 2) + 0.0  # avoid -0.0 at epsilon=0


def holevo_bound_oneway_numeric(epsilon: float) -> float:
    """Same bound from the explicit purification and conditioned ancillas."""
    from .quantum import partial_trace, pure_density

    ancilla = partial_trace(pure_density(purification(epsilon)), keep=(2, 3))
    total = von_neumann_entropy(ancilla)
    conditional = 0.0
    for k in range(4):
        prob, rho_k = conditioned_ancilla(epsilon, k)
        conditional += prob * von_neumann_entropy(rho_k)
    return total - conditional


def holevo_threshold(pom: Literal["tetra", "six"]) -> ThresholdReport:
    """Noise level where the measurement's I_AB meets the common Holevo bound."""
    info = {"tetra": mutual_info_tetra, "six": mutual_info_six}[pom]
    reference = {"tetra": 0.1265, "six": 0.1086}[pom]

    def gap(eps: float) -> float:
        return info(eps) - holevo_bound_oneway(eps)

    return solve_threshold(
        gap,
        bracket=(1e-4, 0.4),
        name=f"holevo_{pom}",
        reference=reference,
        source="one-way message attack",
    )


def bit_error(epsilon: float, n: int) -> float:
    """Raw key-bit error probability of the n-th iteration round."""
    if n < 1:
        raise ValueError("round index must be >= 1")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    if epsilon == 0.0:
        return 0.0
    try:
        ratio = ((4 - epsilon) / (3 * epsilon)) ** (2 ** (n - 1))
    except OverflowError:
        return 0.0
    return 1.0 / (1.0 + ratio)


def secondary_noise(epsilon: float) -> float:
    """Noise parameter of the put-aside sequences formed by a sifting round."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1)")
    return epsilon**2 / (1 + (1 - epsilon) ** 2 / 3)


# --- first-round message attack, by explicit conditioned-ensemble construction
#
# Letters are indexed 0..3.  The canonical public announcement fixes the
# grouping {A,B} (key value 0) versus {C,D} (key value 1); for the pairing
# kinds the canonical Renes announcement maps letter A to 0 and letter B
# to 1.  Twirled statistics are permutation covariant, so one announcement
# represents them all.

_GROUP0 = (0, 1)
_GROUP1 = (2, 3)
_PAIR_ORDERS = ((2, 3), (3, 2), (0, 1), (1, 0))


def _conditioned_pair_vectors(epsilon: float) -> np.ndarray:
    """Pure (unnormalized) states of Eve's pair given both letters.

    Entry [k, l] is the 4-dim vector with squared norm p_kl, obtained by
    projecting the purification onto the rank-1 effects of outcome (k, l).
    """
    psi = purification(epsilon).reshape(2, 2, 4)
    spinors = []
    for effect in tetra_pom().effects:
        w, v = np.linalg.eigh(effect)
        spinors.append(v[:, np.argmax(w)])
    e = np.empty((4, 4, 4), dtype=complex)
    for k in range(4):
        for l in range(4):
            e[k, l] = 0.5 * np.einsum(
                "a,b,abe->e", spinors[k].conj(), spinors[l].conj(), psi
            )
    return e


def _projector(vec: np.ndarray) -> np.ndarray:
    return np.outer(vec, vec.conj())


def message_attack_ensemble(
    epsilon: float, kind: AttackKind
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Eve's state ensemble conditioned on the announcement and the key bit.

    Returns (priors, states); states are indexed by the key-bit value and are
    16-dim for the two-letter kinds, 4-dim for ``renesL1``.  Each state mixes
    its agreement and error branches with the round's bit-error weights; the
    priors over the bit itself are uniform by symmetry.
    """
    if not 0.0 < epsilon < SEPARABLE_EPSILON:
        raise ValueError(f"epsilon {epsilon} outside (0, 2/3)")
    e = _conditioned_pair_vectors(epsilon)
    states = []
    if kind == "iteration":
        # Alice holds the same letter at both positions; Bob's two letters
        # form one of the announced groups, unknown to Eve.
        for group in (_GROUP0, _GROUP1):
            m = np.zeros((16, 16), dtype=complex)
            for k in group:
                for l1, l2 in _PAIR_ORDERS:
                    m += np.kron(_projector(e[k, l1]), _projector(e[k, l2]))
            states.append(m)
    elif kind == "finalPairing":
        # Bob announces the pair from his doubled letter; success means
        # Alice's (doubled) letter is one of the two announced.
        for k in (0, 1):
            m = np.zeros((16, 16), dtype=complex)
            for l in (0, 1):
                m += np.kron(_projector(e[k, l]), _projector(e[k, l]))
            states.append(m)
    elif kind == "renesL1":
        # Single position; Alice announces the pair, Bob reports success.
        for k in (0, 1):
            m = _projector(e[k, 0]) + _projector(e[k, 1])
            states.append(m)
    else:
        raise ValueError(f"unknown attack kind {kind!r}")
    weights = np.array([np.trace(m).real for m in states])
    for m in states:
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise ValueError("non-positive conditioned state")
    return weights / weights.sum(), [m / np.trace(m).real for m in states]


def announcement_conditioned_state(epsilon: float, kind: AttackKind) -> np.ndarray:
    """Eve's state given only the public announcement (bit marginalized)."""
    priors, states = message_attack_ensemble(epsilon, kind)
    return sum(p * s for p, s in zip(priors, states))


def message_attack_bit_error(epsilon: float, kind: AttackKind) -> float:
    """Error probability of the attacked bit for each first-round kind."""
    if kind == "finalPairing":
        return bit_error(epsilon, 2)
    return bit_error(epsilon, 1)


def message_attack_holevo(epsilon: float, kind: AttackKind) -> float:
    """Eve's Holevo information about the key bit, in bits."""
    priors, states = message_attack_ensemble(epsilon, kind)
    mix = sum(p * s for p, s in zip(priors, states))
    return von_neumann_entropy(mix) - float(
        sum(p * von_neumann_entropy(s) for p, s in zip(priors, states))
    )


_MESSAGE_ATTACK_REFERENCE = {
    "iteration": 0.2182,
    "finalPairing": 0.2422,
    "renesL1": 0.1920,
}


def message_attack_threshold(kind: AttackKind) -> ThresholdReport:
    """Noise level where the bit channel capacity meets Eve's Holevo bound."""

    def gap(eps: float) -> float:
        capacity = 1.0 - binary_entropy(message_attack_bit_error(eps, kind))
        return capacity - message_attack_holevo(eps, kind)

    return solve_threshold(
        gap,
        bracket=(0.02, 0.6),
        name=f"message_{kind}",
        reference=_MESSAGE_ATTACK_REFERENCE[kind],
        source="first-round message attack",
    )


def first_round_message_attack(
    epsilon: float, kind: AttackKind
) -> tuple[float, ThresholdReport]:
    """Holevo information at ``epsilon`` plus the threshold report for ``kind``."""
    return message_attack_holevo(epsilon, kind), message_attack_threshold(kind)


#: Published noise thresholds, tabulated for reporting and comparison only.
#: Keys are (attack, rounds label, bit kind); rounds label "L1" is the plain
#: pairing scheme, "inf" the asymptotic limit.  Only the message-attack
#: first-round entries are recomputed by this package.
TABLE_ONE = {
    ("raw-data", "L1", "FP"): 0.2868,
    ("raw-data", "n1", "it"): 0.3324,
    ("raw-data", "n1", "FP"): 0.3598,
    ("raw-data", "n2", "it"): 0.3742,
    ("raw-data", "n2", "FP"): 0.4241,
    ("raw-data", "n3", "it"): 0.4143,
    ("raw-data", "n3", "FP"): 0.4745,
    ("raw-data", "inf", "it"): 0.5091,
    ("raw-data", "inf", "FP"): 0.5714,
    ("collective", "L1", "FP"): 0.2347,
    ("collective", "n1", "it"): 0.2628,
    ("collective", "n1", "FP"): 0.2945,
    ("collective", "n2", "it"): 0.2959,
    ("collective", "n2", "FP"): 0.3405,
    ("collective", "n3", "it"): 0.3401,
    ("collective", "n3", "FP"): 0.3649,
    ("collective", "inf", "it"): 0.3753,
    ("collective", "inf", "FP"): 0.3893,
    ("message", "L1", "FP"): 0.1920,
    ("message", "n1", "it"): 0.2182,
    ("message", "n1", "FP"): 0.2422,
    ("message", "n2", "it"): 0.2482,
    ("message", "n2", "FP"): 0.2976,
    ("message", "n3", "it"): 0.2997,
    ("message", "n3", "FP"): 0.3340,
    ("message", "inf", "it"): 0.3753,
    ("message", "inf", "FP"): 0.3893,
}


def table_one_reference() -> dict[tuple[str, str, str], float]:
    """The published threshold table, verbatim."""
    return dict(TABLE_ONE)


def curve_grid(epsilons: np.ndarray) -> dict[str, np.ndarray]:
    """Columns of the one-way security plot over an epsilon grid."""
    eps = np.asarray(epsilons, dtype=float)
    if eps.min() < 0 or eps.max() > SEPARABLE_EPSILON:
        raise ValueError("grid must lie within [0, 2/3]")
    if np.any(np.diff(eps) <= 0):
        raise ValueError("grid must be strictly increasing")
    return {
        "epsilon": eps,
        "i_ab_tetra": np.array([mutual_info_tetra(e) for e in eps]),
        "i_ab_six": np.array([mutual_info_six(e) for e in eps]),
        "i_ae_tetra": np.array([mutual_info_tetra(eve_noise(e)) for e in eps]),
        "holevo_bound": np.array([holevo_bound_oneway(e) for e in eps]),
        "ck_yield": np.array([ck_yield(e) for e in eps]),
    }
