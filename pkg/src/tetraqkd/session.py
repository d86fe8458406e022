"""Peer-to-peer key-distribution session over a classical public channel.

Both peers run the same phase sequence: handshake, twirl-seed exchange,
detection ingestion, tomographic sacrifice with a source-acceptance test,
then transcript-driven sifting.  Messages are newline-delimited UTF-8 JSON
objects with a ``type`` discriminator, a session id and a per-sender
sequence number that must increase by exactly one.  Any out-of-phase
message, sequence gap or malformed frame aborts the session.

The source itself is simulated: both peers derive the correlated letter
pair stream from the shared ``source_seed`` (standing in for the quantum
channel) and keep only their own column.
"""

from __future__ import annotations

import hashlib
import json
import queue
import socket
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .sifting import (
    GroupingAnnouncement,
    KeyAccounting,
    PositionAnnouncement,
    RenesPairAnnouncement,
    RoundDone,
    RoundStats,
    SameLetterFlag,
    SiftingConfig,
    SuccessFlag,
    grouping_bit_against_letters,
    grouping_bit_for_letter,
    pair_positions,
    renes_decode_as_other,
)
from .source import LETTERS, RngStream, pair_cell_probabilities, sample_pairs, twirl

PROTOCOL = "tetraqkd/1"

MESSAGE_TYPES = {
    "hello",
    "seed_commit",
    "detection_batch_meta",
    "twirl_seed",
    "tomo_request",
    "tomo_reveal",
    "accept_source",
    "position_announce",
    "grouping",
    "same_letter",
    "renes_pair",
    "success",
    "round_done",
    "abort",
}

# stream ids carved out of the shared seeds
_STREAM_SOURCE = 0
_STREAM_TWIRL = 1
_STREAM_TOMO = 2
_STREAM_NONCE_ALICE = 3
_STREAM_NONCE_BOB = 4


class ProtocolError(RuntimeError):
    """Malformed frame or message outside the protocol."""


class SessionAborted(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def encode_message(message: dict) -> bytes:
    """Serialize a message dict to one NDJSON frame."""
    return (json.dumps(message, sort_keys=True, separators=(",", ":")) + "\n").encode(
        "utf-8"
    )


def decode_frame(line: bytes) -> dict:
    """Parse one NDJSON frame; raises ProtocolError on malformed input."""
    try:
        message = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed frame: {exc}") from exc
    if not isinstance(message, dict) or message.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type in frame {line!r}")
    return message


class InMemoryTransport:
    """Ordered reliable in-process transport; create both ends with pair()."""

    def __init__(self, inbox: "queue.Queue[bytes | None]", outbox: "queue.Queue[bytes | None]"):
        self._inbox = inbox
        self._outbox = outbox

    @classmethod
    def pair(cls) -> tuple["InMemoryTransport", "InMemoryTransport"]:
        q1: "queue.Queue[bytes | None]" = queue.Queue()
        q2: "queue.Queue[bytes | None]" = queue.Queue()
        return cls(q1, q2), cls(q2, q1)

    def send(self, message: dict) -> None:
        self._outbox.put(encode_message(message))

    def recv(self, timeout: float = 30.0) -> dict:
        try:
            line = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError("transport timed out")
        if line is None:
            raise ProtocolError("transport closed")
        return decode_frame(line)

    def close(self) -> None:
        self._outbox.put(None)


class SocketTransport:
    """NDJSON frames over a connected stream socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._file = sock.makefile("rb")

    def send(self, message: dict) -> None:
        self._sock.sendall(encode_message(message))

    def recv(self, timeout: float = 30.0) -> dict:
        self._sock.settimeout(timeout)
        line = self._file.readline()
        if not line:
            raise ProtocolError("transport closed")
        return decode_frame(line.rstrip(b"\n"))

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self._file.close()
        self._sock.close()


def tcp_listen(port: int, host: str = "127.0.0.1") -> SocketTransport:
    """Accept one peer connection and wrap it."""
    server = socket.create_server((host, port))
    conn, _ = server.accept()
    server.close()
    return SocketTransport(conn)


def tcp_connect(host: str, port: int) -> SocketTransport:
    return SocketTransport(socket.create_connection((host, port)))


@dataclass(frozen=True)
class AcceptancePolicy:
    """Source-acceptance criteria; one instantiation of a user-chosen test."""

    epsilon_max: float = 0.3
    tv_multiplier: float = 4.0
    min_sacrifice: int = 1000


@dataclass(frozen=True)
class SourceAcceptance:
    sacrificed: int
    frequencies: tuple[tuple[float, ...], ...]
    epsilon_hat: float
    epsilon_clamped: bool
    tv_distance: float
    verdict: str  # "accept" | "reject" | "insufficient"

    def as_record(self) -> dict:
        return {
            "sacrificed": self.sacrificed,
            "epsilon_hat": self.epsilon_hat,
            "epsilon_clamped": self.epsilon_clamped,
            "tv_distance": self.tv_distance,
            "verdict": self.verdict,
        }


def estimate_epsilon(frequencies: np.ndarray) -> tuple[float, bool]:
    """Noise estimate 4 * diagonal mass, clamped to [0, 1] with a flag."""
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.shape != (4, 4):
        raise ValueError("expected a 4x4 frequency matrix")
    if abs(freqs.sum() - 1.0) > 1e-9:
        raise ValueError(f"frequencies sum to {freqs.sum()}, not 1")
    raw = 4.0 * float(np.trace(freqs))
    clamped = min(max(raw, 0.0), 1.0)
    return clamped, clamped != raw


def acceptance_test(
    frequencies: np.ndarray, sacrificed: int, policy: AcceptancePolicy
) -> SourceAcceptance:
    """Accept iff the estimated noise is tolerable and the shape fits.

    The statistic is the total-variation distance between the observed
    16-cell frequencies and the two-orbit family member at the estimated
    noise, compared against ``tv_multiplier * sqrt(16 / sacrificed)``.
    """
    freqs = np.asarray(frequencies, dtype=float)
    eps_hat, flagged = estimate_epsilon(freqs)
    expected = pair_cell_probabilities(eps_hat)
    tv = 0.5 * float(np.abs(freqs - expected).sum())
    if sacrificed < policy.min_sacrifice:
        verdict = "insufficient"
    elif eps_hat <= policy.epsilon_max and tv <= policy.tv_multiplier * np.sqrt(
        16.0 / sacrificed
    ):
        verdict = "accept"
    else:
        verdict = "reject"
    return SourceAcceptance(
        sacrificed=sacrificed,
        frequencies=tuple(map(tuple, freqs)),
        epsilon_hat=eps_hat,
        epsilon_clamped=flagged,
        tv_distance=tv,
        verdict=verdict,
    )


@dataclass(frozen=True)
class SessionConfig:
    """Parameters one peer brings to a session.

    ``source_seed``, the source parameters and the policy must agree between
    the peers (checked in the handshake); ``session_seed`` is the peer's own
    randomness for coins and pairing scans.
    """

    epsilon: float
    pairs: int
    source_seed: int
    session_seed: int
    rounds: int = 2
    final_pairing: bool = False
    sacrifice: int = 2000
    policy: AcceptancePolicy = field(default_factory=AcceptancePolicy)
    session_id: str = "session-0"


@dataclass
class SessionResult:
    role: str
    completed: bool
    abort_reason: str | None
    key_bits: np.ndarray
    acceptance: SourceAcceptance | None
    accounting: KeyAccounting | None
    transcript: list[dict]

    @property
    def key_hex(self) -> str:
        return key_to_hex(self.key_bits)


def key_to_hex(bits: np.ndarray) -> str:
    """Hex encoding of a bit sequence, most significant bit first."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) == 0:
        return ""
    return bytes(np.packbits(bits)).hex()


def write_transcript(path: str, transcript: list[dict]) -> None:
    """Persist a session transcript as JSON lines."""
    with open(path, "wb") as fh:
        for message in transcript:
            fh.write(encode_message(message))


class _Peer:
    """Framing, sequencing and phase bookkeeping for one session endpoint."""

    def __init__(self, role: str, transport: Any, config: SessionConfig):
        self.role = role
        self.transport = transport
        self.config = config
        self.sent_seq = 0
        self.peer_seq = 0
        self.transcript: list[dict] = []

    def send(self, msg_type: str, **payload: Any) -> None:
        self.sent_seq += 1
        message = {
            "type": msg_type,
            "session": self.config.session_id,
            "seq": self.sent_seq,
            **payload,
        }
        self.transcript.append(message)
        self.transport.send(message)

    def abort(self, reason: str) -> "SessionAborted":
        try:
            self.send("abort", reason=reason)
        except Exception:
            pass
        return SessionAborted(reason)

    def expect(self, *allowed: str) -> dict:
        try:
            message = self.transport.recv()
        except ProtocolError as exc:
            raise SessionAborted(str(exc))
        if message.get("session") != self.config.session_id:
            raise self.abort("session id mismatch")
        if message.get("seq") != self.peer_seq + 1:
            raise self.abort("sequence gap")
        self.peer_seq = message["seq"]
        self.transcript.append(message)
        if message["type"] == "abort":
            raise SessionAborted(f"aborted by peer: {message.get('reason')}")
        if message["type"] not in allowed:
            raise self.abort(
                f"out-of-phase message {message['type']!r}, expected one of {sorted(allowed)}"
            )
        return message


def _hello_payload(config: SessionConfig, role: str) -> dict:
    return {
        "role": role,
        "protocol": PROTOCOL,
        "pairs": config.pairs,
        "rounds": config.rounds,
        "final_pairing": config.final_pairing,
        "sacrifice": config.sacrifice,
        "source_seed": config.source_seed,
        "epsilon_max": config.policy.epsilon_max,
        "tv_multiplier": config.policy.tv_multiplier,
    }


def _derive_letters(config: SessionConfig, twirl_seed: int) -> tuple[np.ndarray, np.ndarray]:
    raw_a, raw_b = sample_pairs(
        config.epsilon, config.pairs, RngStream(config.source_seed, _STREAM_SOURCE)
    )
    a, b, _ = twirl(raw_a, raw_b, RngStream(twirl_seed, _STREAM_TWIRL))
    return a, b


def _tomo_indices(config: SessionConfig, twirl_seed: int) -> np.ndarray:
    gen = RngStream(twirl_seed, _STREAM_TOMO).generator()
    count = min(config.sacrifice, config.pairs)
    return np.sort(gen.choice(config.pairs, size=count, replace=False))


def _pair_frequencies(mine: np.ndarray, theirs: np.ndarray, alice_side: bool) -> np.ndarray:
    freqs = np.zeros((4, 4))
    a = mine if alice_side else theirs
    b = theirs if alice_side else mine
    np.add.at(freqs, (a, b), 1.0)
    return freqs / len(a)


def run_session(role: str, transport: Any, config: SessionConfig) -> SessionResult:
    """Run one peer of the session to completion or abort.

    Protocol violations and a rejected source end the session with an abort
    reason instead of raising, so both outcomes are ordinary return values.
    """
    if role not in ("alice", "bob"):
        raise ValueError("role must be 'alice' or 'bob'")
    peer = _Peer(role, transport, config)
    try:
        key_bits, acceptance, accounting = _run_phases(peer)
        return SessionResult(
            role, True, None, key_bits, acceptance, accounting, peer.transcript
        )
    except SessionAborted as exc:
        return SessionResult(
            role,
            False,
            exc.reason,
            np.empty(0, dtype=np.uint8),
            None,
            None,
            peer.transcript,
        )
    finally:
        transport.close()


def _run_phases(peer: _Peer) -> tuple[np.ndarray, SourceAcceptance, KeyAccounting]:
    config = peer.config
    is_alice = peer.role == "alice"

    # handshake
    if is_alice:
        peer.send("hello", **_hello_payload(config, "alice"))
        hello = peer.expect("hello")
    else:
        hello = peer.expect("hello")
        peer.send("hello", **_hello_payload(config, "bob"))
    mine = _hello_payload(config, peer.role)
    for key in mine:
        if key == "role":
            continue
        if hello.get(key) != mine[key]:
            raise peer.abort(f"config mismatch on {key!r}")

    # twirl-seed exchange: Alice commits, Bob reveals, Alice reveals
    nonce_stream = _STREAM_NONCE_ALICE if is_alice else _STREAM_NONCE_BOB
    nonce = int(RngStream(config.session_seed, nonce_stream).generator().integers(2**62))
    if is_alice:
        peer.send("seed_commit", commit=hashlib.sha256(str(nonce).encode()).hexdigest())
        bob_nonce = peer.expect("twirl_seed")["seed"]
        peer.send("twirl_seed", seed=nonce)
        twirl_seed = nonce ^ int(bob_nonce)
    else:
        commit = peer.expect("seed_commit")["commit"]
        peer.send("twirl_seed", seed=nonce)
        alice_nonce = int(peer.expect("twirl_seed")["seed"])
        if hashlib.sha256(str(alice_nonce).encode()).hexdigest() != commit:
            raise peer.abort("twirl seed commitment mismatch")
        twirl_seed = alice_nonce ^ nonce

    # detection ingestion (simulated source shared through source_seed)
    alice_letters, bob_letters = _derive_letters(config, twirl_seed)
    own = alice_letters if is_alice else bob_letters
    if is_alice:
        peer.send("detection_batch_meta", pairs=len(own))
        meta = peer.expect("detection_batch_meta")
    else:
        meta = peer.expect("detection_batch_meta")
        peer.send("detection_batch_meta", pairs=len(own))
    if meta["pairs"] != len(own):
        raise peer.abort("detection batch size mismatch")

    # tomographic sacrifice: indices come from the public seed, Alice announces
    indices = _tomo_indices(config, twirl_seed)
    if is_alice:
        peer.send("tomo_request", indices=[int(i) for i in indices])
        reveal = peer.expect("tomo_reveal")
        peer.send("tomo_reveal", letters="".join(LETTERS[v] for v in own[indices]))
    else:
        request = peer.expect("tomo_request")
        if list(request["indices"]) != [int(i) for i in indices]:
            raise peer.abort("tomography index mismatch")
        peer.send("tomo_reveal", letters="".join(LETTERS[v] for v in own[indices]))
        reveal = peer.expect("tomo_reveal")
    theirs = np.array([LETTERS.index(c) for c in reveal["letters"]], dtype=np.uint8)
    if len(theirs) != len(indices):
        raise peer.abort("tomography reveal length mismatch")
    freqs = _pair_frequencies(own[indices], theirs, alice_side=is_alice)

    # source acceptance
    acceptance = acceptance_test(freqs, len(indices), config.policy)
    record = acceptance.as_record()
    if is_alice:
        peer.send("accept_source", **record)
        peer_record = peer.expect("accept_source")
    else:
        peer_record = peer.expect("accept_source")
        peer.send("accept_source", **record)
    if peer_record["verdict"] != acceptance.verdict:
        raise peer.abort("acceptance verdict mismatch")
    if acceptance.verdict != "accept":
        raise SessionAborted(f"source rejected (verdict {acceptance.verdict!r})")

    # sifting on the unrevealed letters only
    mask = np.ones(len(own), dtype=bool)
    mask[indices] = False
    sifting_letters = own[mask]
    key_bits, accounting = _run_sifting_phase(peer, sifting_letters)
    return key_bits, acceptance, accounting


def _run_sifting_phase(peer: _Peer, letters: np.ndarray) -> tuple[np.ndarray, KeyAccounting]:
    """Alice drives position announcements; Bob answers 2a/2b/2b'."""
    config = peer.config
    sifting = SiftingConfig(rounds=config.rounds, final_pairing=config.final_pairing)
    gen = RngStream(config.session_seed, 10).generator()
    accounting = KeyAccounting(initial_length=len(letters))
    bits: list[int] = []
    seq = letters
    if peer.role == "alice":
        for round_index in range(1, sifting.rounds + 1):
            if len(seq) < 2:
                break
            fp_mode = sifting.final_pairing and round_index == sifting.rounds
            pairs, leftover = pair_positions(seq, gen)
            next_letters: list[int] = []
            stats = _new_round_stats(round_index, len(seq), len(pairs), leftover)
            for p1, p2 in pairs:
                my_letter = int(seq[p1])
                peer.send("position_announce", pos1=int(p1), pos2=int(p2))
                reply = peer.expect("grouping", "same_letter", "renes_pair")
                if reply["type"] == "grouping":
                    ann = _grouping_from_wire(peer, reply)
                    bits.append(grouping_bit_for_letter(ann, my_letter))
                    stats.step2a_count += 1
                    stats.bits_produced += 1
                elif reply["type"] == "same_letter":
                    if fp_mode:
                        raise peer.abort("same_letter in final pairing round")
                    next_letters.append(my_letter)
                    stats.step2b_count += 1
                    stats.residual_carried += 1
                else:
                    if not fp_mode:
                        raise peer.abort("renes_pair outside final pairing round")
                    ann = _renes_from_wire(peer, reply)
                    stats.fp_attempts += 1
                    success = my_letter in (ann.letter0, ann.letter1)
                    peer.send("success", flag=bool(success))
                    if success:
                        bits.append(0 if my_letter == ann.letter0 else 1)
                        stats.fp_successes += 1
                        stats.bits_produced += 1
            peer.send("round_done", round=round_index)
            accounting.rounds.append(stats)
            seq = np.array(next_letters, dtype=np.uint8)
    else:
        for round_index in range(1, sifting.rounds + 1):
            if len(seq) < 2:
                break
            fp_mode = sifting.final_pairing and round_index == sifting.rounds
            next_letters: list[int] = []
            stats = _new_round_stats(round_index, len(seq), 0, 0)
            while True:
                msg = peer.expect("position_announce", "round_done")
                if msg["type"] == "round_done":
                    break
                p1, p2 = int(msg["pos1"]), int(msg["pos2"])
                if not (0 <= p1 < len(seq) and 0 <= p2 < len(seq)) or p1 == p2:
                    raise peer.abort("announced positions out of range")
                stats.pairs_announced += 1
                b1, b2 = int(seq[p1]), int(seq[p2])
                if b1 != b2:
                    coin = int(gen.integers(0, 2))
                    bob_group = tuple(sorted((b1, b2)))
                    other = tuple(sorted(set(range(4)) - set(bob_group)))
                    group0, group1 = (bob_group, other) if coin else (other, bob_group)
                    peer.send(
                        "grouping",
                        group0=[LETTERS[v] for v in group0],
                        group1=[LETTERS[v] for v in group1],
                    )
                    bits.append(
                        grouping_bit_against_letters(
                            GroupingAnnouncement(group0, group1), b1
                        )
                    )
                    stats.step2a_count += 1
                    stats.bits_produced += 1
                elif fp_mode:
                    partner = int((b1 + 1 + gen.integers(0, 3)) % 4)
                    coin = int(gen.integers(0, 2))
                    letter0, letter1 = (b1, partner) if coin == 0 else (partner, b1)
                    peer.send(
                        "renes_pair", letter0=LETTERS[letter0], letter1=LETTERS[letter1]
                    )
                    stats.fp_attempts += 1
                    if peer.expect("success")["flag"]:
                        bit = renes_decode_as_other(
                            RenesPairAnnouncement(letter0, letter1), b1
                        )
                        bits.append(int(bit))
                        stats.fp_successes += 1
                        stats.bits_produced += 1
                else:
                    peer.send("same_letter")
                    next_letters.append(b1)
                    stats.step2b_count += 1
                    stats.residual_carried += 1
            accounting.rounds.append(stats)
            seq = np.array(next_letters, dtype=np.uint8)
    return np.array(bits, dtype=np.uint8), accounting


def _new_round_stats(round_index: int, length: int, pairs: int, leftover: int) -> RoundStats:
    return RoundStats(
        round_index=round_index,
        input_length=length,
        pairs_announced=pairs,
        leftover_discarded=leftover,
        step2a_count=0,
        step2b_count=0,
        fp_attempts=0,
        fp_successes=0,
        bits_produced=0,
        residual_carried=0,
        input_epsilon_estimate=float("nan"),
    )


def _grouping_from_wire(peer: _Peer, msg: dict) -> GroupingAnnouncement:
    try:
        group0 = tuple(sorted(LETTERS.index(c) for c in msg["group0"]))
        group1 = tuple(sorted(LETTERS.index(c) for c in msg["group1"]))
    except (KeyError, ValueError, TypeError):
        raise peer.abort("malformed grouping")
    if len(group0) != 2 or len(group1) != 2 or set(group0) | set(group1) != set(range(4)):
        raise peer.abort("grouping does not partition the alphabet")
    return GroupingAnnouncement(group0, group1)


def _renes_from_wire(peer: _Peer, msg: dict) -> RenesPairAnnouncement:
    try:
        letter0 = LETTERS.index(msg["letter0"])
        letter1 = LETTERS.index(msg["letter1"])
    except (KeyError, ValueError, TypeError):
        raise peer.abort("malformed renes pair")
    if letter0 == letter1:
        raise peer.abort("renes pair letters must differ")
    return RenesPairAnnouncement(letter0, letter1)
