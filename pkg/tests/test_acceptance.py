"""End-to-end acceptance checks with pinned tolerances.

Each test prints one PASS/FAIL line; run with ``pytest -s tests/test_acceptance.py``
to see them all.
"""

import math
import socket
import threading
from contextlib import contextmanager

import numpy as np
import pytest

from tetraqkd import quantum as q
from tetraqkd import security, session, sifting, tomography
from tetraqkd.source import (
    RngStream,
    conditioned_ancilla,
    noisy_singlet,
    purification,
    sample_pairs,
)

from conftest import random_density


@contextmanager
def criterion(number, description):
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {number:2d}: FAIL - {description}")
        raise
    print(f"ACCEPTANCE {number:2d}: PASS - {description}")


def test_criterion_01_ideal_mutual_information():
    with criterion(1, "ideal mutual information via the Born rule"):
        tetra = tomography.tetra_pom()
        six = tomography.six_state_pom()
        singlet = noisy_singlet(0.0)
        i_tetra = q.shannon_mutual_information(
            tomography.joint_distribution(singlet, tetra, tetra)
        )
        i_six = q.shannon_mutual_information(
            tomography.joint_distribution(singlet, six, six)
        )
        assert abs(i_tetra - math.log2(4 / 3)) < 1e-9
        assert abs(i_tetra - 0.415037) < 1e-6
        assert abs(i_six - 1 / 3) < 1e-9


def test_criterion_02_closed_forms_match_numeric_path():
    with criterion(2, "closed-form informations match the numeric path on a 50-point grid"):
        tetra = tomography.tetra_pom()
        six = tomography.six_state_pom()
        for eps in np.linspace(0.0, 1.0, 50):
            rho = noisy_singlet(eps)
            assert abs(
                security.mutual_info_tetra(eps)
                - q.shannon_mutual_information(tomography.joint_distribution(rho, tetra, tetra))
            ) < 1e-9
            assert abs(
                security.mutual_info_six(eps)
                - q.shannon_mutual_information(tomography.joint_distribution(rho, six, six))
            ) < 1e-9


def test_criterion_03_reconstruction_identity():
    with criterion(3, "measure-then-invert round trip on 100 random two-qubit states"):
        rng = np.random.default_rng(424242)
        pom = tomography.tetra_pom()
        for _ in range(100):
            rho = random_density(rng, 4)
            recovered, _ = tomography.reconstruct_state(
                tomography.joint_distribution(rho, pom, pom)
            )
            assert q.trace_distance(recovered, rho) < 1e-10


def test_criterion_04_purification_and_conditioned_ancillas():
    with criterion(4, "purification reduces correctly; conditioned ancillas are rank 2"):
        for eps in (0.0, 0.1, 0.25, 0.5):
            rho = q.partial_trace(q.pure_density(purification(eps)), keep=(0, 1))
            assert q.trace_distance(rho, noisy_singlet(eps)) < 1e-12
            for k in range(4):
                _, rho_e = conditioned_ancilla(eps, k)
                lam = q.eigenvalues(rho_e)
                assert abs(lam[0] - (1 - eps / 2)) < 1e-10
                assert abs(lam[1] - eps / 2) < 1e-10
                assert np.all(np.abs(lam[2:]) < 1e-10)


def test_criterion_05_noise_duality_and_ck_threshold():
    with criterion(5, "epsilon-eta circle identity and the one-way crossover threshold"):
        for eps in np.linspace(0.0, 2 / 3, 30):
            eta = security.eve_noise(eps)
            assert abs((1 - 1.5 * eps) ** 2 + (1 - eta) ** 2 - 1) < 1e-12
        root = security.ck_threshold().threshold
        assert abs(root - 1 / (2.5 + math.sqrt(3))) < 1e-6
        assert abs(root - 0.2363) < 5e-5


def test_criterion_06_holevo_thresholds():
    with criterion(6, "one-way Holevo thresholds for both measurements"):
        assert abs(security.holevo_threshold("tetra").threshold - 0.1265) < 5e-4
        assert abs(security.holevo_threshold("six").threshold - 0.1086) < 5e-4


def test_criterion_07_sifting_efficiencies():
    with criterion(7, "zero-noise sifting efficiencies and bit-identical keys"):
        a, b = sample_pairs(0.0, 100_000, RngStream(7, 0))
        for rounds, final_pairing, expected in [
            (1, False, 0.333),
            (2, False, 0.389),
            (3, False, 0.398),
            (2, True, 0.4 * (1 - (1 / 6) ** 3)),
        ]:
            result = sifting.run_sifting(
                a,
                b,
                sifting.SiftingConfig(rounds=rounds, final_pairing=final_pairing),
                RngStream(7, 1),
                record_transcript=False,
            )
            assert np.array_equal(result.alice_key, result.bob_key)
            assert abs(result.accounting.efficiency - expected) < 0.01


def test_criterion_08_noise_propagation():
    with criterion(8, "bit errors per round and residual noise match the formulas"):
        a, b = sample_pairs(0.25, 1_000_000, RngStream(11, 0))
        result = sifting.run_sifting(
            a, b, sifting.SiftingConfig(rounds=2), RngStream(11, 1), record_transcript=False
        )
        for stats, expected in zip(result.accounting.rounds, (1 / 6, 1 / 26)):
            sd = math.sqrt(expected * (1 - expected) / stats.bits_produced)
            assert abs(stats.bit_error_rate - expected) < 4 * sd
        for eps, seed in ((0.2, 21), (0.3, 22)):
            a, b = sample_pairs(eps, 1_000_000, RngStream(seed, 0))
            result = sifting.run_sifting(
                a, b, sifting.SiftingConfig(rounds=2), RngStream(seed, 1), record_transcript=False
            )
            [estimate] = sifting.residual_statistics(result)
            expected = security.secondary_noise(eps)
            matched = result.accounting.rounds[1].input_length
            sd = 4 * math.sqrt((expected / 4) * (1 - expected / 4) / matched)
            assert abs(estimate - expected) < 4 * sd


def test_criterion_09_first_round_message_attack():
    with criterion(9, "rank-9 conditioned state and first-round message-attack thresholds"):
        state = security.announcement_conditioned_state(0.25, "iteration")
        lam = np.sort(np.linalg.eigvalsh(state))[::-1]
        assert lam[8] > 1e-9
        assert lam[9] < 1e-9
        for kind, target in (
            ("iteration", 0.2182),
            ("finalPairing", 0.2422),
            ("renesL1", 0.1920),
        ):
            report = security.message_attack_threshold(kind)
            assert abs(report.threshold - target) < 0.01, (
                f"{kind}: computed {report.threshold:.6f} vs published {target}"
            )


def test_criterion_10_session_protocol():
    with criterion(10, "transport-independent sessions and high-noise rejection"):
        def run_pair(make_transports):
            configs = {
                "alice": session.SessionConfig(
                    epsilon=0.0, pairs=10_000, source_seed=77, session_seed=1,
                    rounds=2, final_pairing=True, sacrifice=2000,
                ),
                "bob": session.SessionConfig(
                    epsilon=0.0, pairs=10_000, source_seed=77, session_seed=2,
                    rounds=2, final_pairing=True, sacrifice=2000,
                ),
            }
            transports = dict(zip(("alice", "bob"), make_transports()))
            results = {}
            threads = [
                threading.Thread(
                    target=lambda r=role: results.update(
                        {r: session.run_session(r, transports[r], configs[r])}
                    )
                )
                for role in ("alice", "bob")
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join(timeout=120)
            return results

        loop = run_pair(session.InMemoryTransport.pair)
        assert loop["alice"].completed and loop["bob"].completed
        assert np.array_equal(loop["alice"].key_bits, loop["bob"].key_bits)
        assert loop["alice"].transcript == loop["bob"].transcript

        def socketpair_transports():
            s1, s2 = socket.socketpair()
            return session.SocketTransport(s1), session.SocketTransport(s2)

        sock = run_pair(socketpair_transports)
        assert np.array_equal(sock["alice"].key_bits, loop["alice"].key_bits)
        assert sock["alice"].transcript == loop["alice"].transcript

        policy = session.AcceptancePolicy(epsilon_max=0.3)
        m = 10_000
        rejected = 0
        trials = 100
        for trial in range(trials):
            a, b = sample_pairs(0.5, m, RngStream(5000 + trial, 0))
            freqs = np.zeros((4, 4))
            np.add.at(freqs, (a, b), 1.0 / m)
            if session.acceptance_test(freqs, m, policy).verdict == "reject":
                rejected += 1
        assert rejected / trials >= 0.99
