"""Two-way key extraction from paired letter sequences.

Each round, Alice pairs up positions that carry the same letter of hers and
announces the positions.  If Bob holds two different letters there, he
announces a value-labelled two/two grouping of the alphabet and a key bit is
extracted (step 2a); if he holds the same letter twice, both put their letter
aside for the next round (step 2b).  Optionally the last round replaces the
put-aside step by Bob announcing a Renes pair built from his doubled letter
(step 2b').

Bit convention: the key bit is the value assigned to Alice's letter.  In a
grouping, Alice records the value of the group containing her letter and Bob
the value of the group not containing his; in a Renes pair announcement the
value-0 letter is stated first, Alice reads off her own letter's value and
Bob decodes as the value of the letter that is not his.  At zero noise the
two readings always agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .source import RngStream, _as_generator

ALL_LETTERS = frozenset(range(4))


# --- public transcript events


@dataclass(frozen=True)
class PositionAnnouncement:
    pos1: int
    pos2: int


@dataclass(frozen=True)
class GroupingAnnouncement:
    """Two/two letter partition; group0 carries value 0, group1 value 1."""

    group0: tuple[int, int]
    group1: tuple[int, int]


@dataclass(frozen=True)
class SameLetterFlag:
    pass


@dataclass(frozen=True)
class RenesPairAnnouncement:
    """Two-letter value map; letter0 carries value 0, letter1 value 1."""

    letter0: int
    letter1: int


@dataclass(frozen=True)
class SuccessFlag:
    success: bool


@dataclass(frozen=True)
class RoundDone:
    round_index: int


Event = (
    PositionAnnouncement
    | GroupingAnnouncement
    | SameLetterFlag
    | RenesPairAnnouncement
    | SuccessFlag
    | RoundDone
)


@dataclass(frozen=True)
class SiftingConfig:
    """Number of rounds and whether the last round uses the Renes variant."""

    rounds: int = 3
    final_pairing: bool = False

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("need at least one round")

    def expected_efficiency(self) -> float:
        """Asymptotic zero-noise key bits per letter for this configuration."""
        n = self.rounds + (1 if self.final_pairing else 0)
        return 0.4 * (1 - (1 / 6) ** n)


@dataclass
class RoundStats:
    round_index: int
    input_length: int
    pairs_announced: int
    leftover_discarded: int
    step2a_count: int
    step2b_count: int
    fp_attempts: int
    fp_successes: int
    bits_produced: int
    residual_carried: int
    input_epsilon_estimate: float
    bit_error_rate: float | None = None


@dataclass
class KeyAccounting:
    """Per-round letter/bit bookkeeping of one sifting run."""

    initial_length: int
    rounds: list[RoundStats] = field(default_factory=list)

    @property
    def total_bits(self) -> int:
        return sum(r.bits_produced for r in self.rounds)

    @property
    def efficiency(self) -> float:
        return self.total_bits / self.initial_length if self.initial_length else 0.0

    def as_record(self) -> dict:
        return {
            "initial_length": self.initial_length,
            "total_bits": self.total_bits,
            "efficiency": self.efficiency,
            "rounds": [vars(r).copy() for r in self.rounds],
        }


@dataclass
class SiftingResult:
    alice_key: np.ndarray
    bob_key: np.ndarray
    transcript: list[Event] | None
    accounting: KeyAccounting


def renes_pair(
    letter: int, rng: "RngStream | np.random.Generator"
) -> tuple[RenesPairAnnouncement, int]:
    """Alice's pairing announcement for one letter, and her key bit.

    A uniform bit is assigned to the letter, a distinct partner letter is
    drawn uniformly, and the value map is announced value-0 letter first, so
    the announcement order carries no information about the bit.
    """
    if letter not in range(4):
        raise ValueError(f"letter {letter} outside 0..3")
    gen = _as_generator(rng)
    bit = int(gen.integers(0, 2))
    partner = int((letter + 1 + gen.integers(0, 3)) % 4)
    if bit == 0:
        return RenesPairAnnouncement(letter, partner), bit
    return RenesPairAnnouncement(partner, letter), bit


def renes_decode_as_other(ann: RenesPairAnnouncement, own_letter: int) -> int | None:
    """Bit read as the announced value of the letter one does not hold."""
    if own_letter == ann.letter0:
        return 1
    if own_letter == ann.letter1:
        return 0
    return None


def grouping_bit_for_letter(ann: GroupingAnnouncement, letter: int) -> int:
    """Announced value of the group containing ``letter`` (Alice's reading)."""
    return 0 if letter in ann.group0 else 1


def grouping_bit_against_letters(ann: GroupingAnnouncement, letter: int) -> int:
    """Announced value of the group not containing ``letter`` (Bob's reading)."""
    return 1 if letter in ann.group0 else 0


def pair_positions(
    letters: np.ndarray, gen: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Pair up equal-letter positions along a random scan order.

    Positions are visited in a uniformly random permutation; each position is
    paired with the previous unmatched one holding the same letter.  Returns
    the pairs (scan-earlier position first) ordered by completion time, plus
    the count of unmatched leftovers (at most one per letter).
    """
    letters = np.asarray(letters)
    n = len(letters)
    order = gen.permutation(n)
    scan_rank = np.empty(n, dtype=np.int64)
    scan_rank[order] = np.arange(n)
    shuffled_letters = letters[order]
    firsts, seconds, completion = [], [], []
    leftover = 0
    for letter in range(4):
        pos = order[shuffled_letters == letter]
        usable = len(pos) - (len(pos) % 2)
        leftover += len(pos) - usable
        firsts.append(pos[0:usable:2])
        seconds.append(pos[1:usable:2])
        completion.append(scan_rank[pos[1:usable:2]])
    p1 = np.concatenate(firsts)
    p2 = np.concatenate(seconds)
    emit = np.argsort(np.concatenate(completion))
    return np.stack([p1[emit], p2[emit]], axis=1), leftover


def run_sifting(
    alice: np.ndarray,
    bob: np.ndarray,
    config: SiftingConfig,
    rng: "RngStream | np.random.Generator",
    record_transcript: bool = True,
) -> SiftingResult:
    """Run the full iterative extraction and return keys plus bookkeeping.

    Alice's pairing scan and Bob's coins are drawn from ``rng`` in a fixed
    order, so a run is reproducible.  With ``record_transcript`` the list of
    public events is kept; it is sufficient to regenerate either key from
    that party's letters alone (see ``replay_key``).
    """
    alice = np.asarray(alice, dtype=np.uint8)
    bob = np.asarray(bob, dtype=np.uint8)
    if alice.shape != bob.shape or alice.ndim != 1:
        raise ValueError("letter sequences must be 1-d and of equal length")
    gen = _as_generator(rng)

    a_seq, b_seq = alice, bob
    events: list[Event] | None = [] if record_transcript else None
    accounting = KeyAccounting(initial_length=len(alice))
    alice_bits: list[np.ndarray] = []
    bob_bits: list[np.ndarray] = []

    for round_index in range(1, config.rounds + 1):
        length = len(a_seq)
        if length < 2:
            break
        pairs, leftover = pair_positions(a_seq, gen)
        p1, p2 = pairs[:, 0], pairs[:, 1]
        a_letters = a_seq[p1]
        b1, b2 = b_seq[p1], b_seq[p2]
        same = b1 == b2
        n_pairs = len(pairs)
        n_same = int(same.sum())
        fp_mode = config.final_pairing and round_index == config.rounds

        # step 2a: Bob's fair coin decides which group carries value 0
        coin = np.zeros(n_pairs, dtype=np.uint8)
        coin[~same] = gen.integers(0, 2, size=n_pairs - n_same, dtype=np.uint8)
        alice_in_bob_group = (a_letters == b1) | (a_letters == b2)
        a_bit = np.where(alice_in_bob_group, 1 - coin, coin).astype(np.uint8)
        b_bit = coin.copy()
        has_bit = ~same

        if fp_mode and n_same:
            partner = ((b1[same] + 1 + gen.integers(0, 3, size=n_same)) % 4).astype(
                np.uint8
            )
            value_coin = gen.integers(0, 2, size=n_same, dtype=np.uint8)
            letter0 = np.where(value_coin == 0, b1[same], partner)
            letter1 = np.where(value_coin == 0, partner, b1[same])
            a_same = a_letters[same]
            success = (a_same == letter0) | (a_same == letter1)
            a_bit[same] = np.where(a_same == letter0, 0, 1)
            b_bit[same] = np.where(letter0 == partner, 0, 1)
            fp_has_bit = np.zeros(n_pairs, dtype=bool)
            fp_has_bit[same] = success
            has_bit = has_bit | fp_has_bit
            a_next = np.empty(0, dtype=np.uint8)
            b_next = np.empty(0, dtype=np.uint8)
            fp_successes = int(success.sum())
        else:
            a_next = a_letters[same]
            b_next = b1[same]
            fp_successes = 0

        if events is not None:
            same_idx = 0
            for i in range(n_pairs):
                events.append(PositionAnnouncement(int(p1[i]), int(p2[i])))
                if not same[i]:
                    bob_group = tuple(sorted((int(b1[i]), int(b2[i]))))
                    other = tuple(sorted(ALL_LETTERS - set(bob_group)))
                    if coin[i] == 0:
                        events.append(GroupingAnnouncement(other, bob_group))
                    else:
                        events.append(GroupingAnnouncement(bob_group, other))
                elif fp_mode:
                    events.append(
                        RenesPairAnnouncement(int(letter0[same_idx]), int(letter1[same_idx]))
                    )
                    events.append(SuccessFlag(bool(success[same_idx])))
                    same_idx += 1
                else:
                    events.append(SameLetterFlag())
            events.append(RoundDone(round_index))

        round_a_bits = a_bit[has_bit]
        round_b_bits = b_bit[has_bit]
        alice_bits.append(round_a_bits)
        bob_bits.append(round_b_bits)
        accounting.rounds.append(
            RoundStats(
                round_index=round_index,
                input_length=length,
                pairs_announced=n_pairs,
                leftover_discarded=leftover,
                step2a_count=n_pairs - n_same,
                step2b_count=0 if fp_mode else n_same,
                fp_attempts=n_same if fp_mode else 0,
                fp_successes=fp_successes,
                bits_produced=int(has_bit.sum()),
                residual_carried=len(a_next),
                input_epsilon_estimate=float(4 * np.mean(a_seq == b_seq)),
                bit_error_rate=(
                    float(np.mean(round_a_bits != round_b_bits))
                    if len(round_a_bits)
                    else None
                ),
            )
        )
        a_seq, b_seq = a_next, b_next

    empty = np.empty(0, dtype=np.uint8)
    return SiftingResult(
        alice_key=np.concatenate(alice_bits) if alice_bits else empty,
        bob_key=np.concatenate(bob_bits) if bob_bits else empty,
        transcript=events,
        accounting=accounting,
    )


def residual_statistics(result: SiftingResult) -> list[float]:
    """Empirical epsilon of each put-aside sequence (rounds two onward)."""
    estimates = [
        r.input_epsilon_estimate for r in result.accounting.rounds if r.round_index >= 2
    ]
    if not estimates:
        raise ValueError("no put-aside rounds available")
    return estimates


def replay_key(letters: np.ndarray, transcript: list[Event], side: str) -> np.ndarray:
    """Regenerate one party's key from its letters and the public transcript."""
    if side not in ("alice", "bob"):
        raise ValueError("side must be 'alice' or 'bob'")
    seq = np.asarray(letters, dtype=np.uint8)
    next_letters: list[int] = []
    bits: list[int] = []
    pair: tuple[int, int] | None = None
    renes: RenesPairAnnouncement | None = None
    for event in transcript:
        if isinstance(event, PositionAnnouncement):
            pair = (int(seq[event.pos1]), int(seq[event.pos2]))
        elif isinstance(event, GroupingAnnouncement):
            assert pair is not None
            if side == "alice":
                bits.append(grouping_bit_for_letter(event, pair[0]))
            else:
                bits.append(grouping_bit_against_letters(event, pair[0]))
            pair = None
        elif isinstance(event, SameLetterFlag):
            assert pair is not None
            next_letters.append(pair[0])
            pair = None
        elif isinstance(event, RenesPairAnnouncement):
            renes = event
        elif isinstance(event, SuccessFlag):
            assert pair is not None and renes is not None
            if event.success:
                if side == "alice":
                    bits.append(0 if pair[0] == renes.letter0 else 1)
                else:
                    bit = renes_decode_as_other(renes, pair[0])
                    assert bit is not None
                    bits.append(bit)
            pair = None
            renes = None
        elif isinstance(event, RoundDone):
            seq = np.array(next_letters, dtype=np.uint8)
            next_letters = []
    return np.array(bits, dtype=np.uint8)
