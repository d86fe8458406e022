"""Command line entry points: simulate, curves, thresholds, session.

Every command is deterministic under a fixed seed.  Exit codes: 0 success,
2 usage error, 3 solver or acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading

import numpy as np

from . import security, session, sifting
from .source import SEPARABLE_EPSILON, RngStream, sample_pairs, twirl

SCHEMA_SIMULATE = "tetraqkd.simulate.v1"
SCHEMA_THRESHOLDS = "tetraqkd.thresholds.v1"
CURVES_HEADER = "epsilon,i_ab_tetra,i_ab_six,i_ae_tetra,holevo_bound,ck_yield"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3


def _default_seed() -> int:
    return int(os.environ.get("TETRAQKD_SEED", "0"))


def _write(out: str | None, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_simulate(args: argparse.Namespace) -> int:
    if not 0.0 <= args.epsilon <= 1.0:
        print("error: --epsilon must lie in [0, 1]", file=sys.stderr)
        return EXIT_USAGE
    raw_a, raw_b = sample_pairs(args.epsilon, args.pairs, RngStream(args.seed, 0))
    alice, bob, _ = twirl(raw_a, raw_b, RngStream(args.seed, 1))
    config = sifting.SiftingConfig(rounds=args.rounds, final_pairing=args.final_pairing)
    result = sifting.run_sifting(
        alice, bob, config, RngStream(args.seed, 2), record_transcript=False
    )
    rounds = []
    for stats in result.accounting.rounds:
        formula_error = security.bit_error(args.epsilon, stats.round_index)
        rounds.append(
            {
                "round": stats.round_index,
                "input_length": stats.input_length,
                "pairs_announced": stats.pairs_announced,
                "leftover_discarded": stats.leftover_discarded,
                "bits_produced": stats.bits_produced,
                "residual_carried": stats.residual_carried,
                "empirical_bit_error": stats.bit_error_rate,
                "formula_bit_error": formula_error,
                "empirical_input_epsilon": stats.input_epsilon_estimate,
            }
        )
    report = {
        "schema": SCHEMA_SIMULATE,
        "config": {
            "epsilon": args.epsilon,
            "pairs": args.pairs,
            "rounds": args.rounds,
            "final_pairing": args.final_pairing,
            "seed": args.seed,
        },
        "efficiency": result.accounting.efficiency,
        "formula_efficiency": config.expected_efficiency(),
        "total_bits": int(result.accounting.total_bits),
        "keys_identical": bool(np.array_equal(result.alice_key, result.bob_key)),
        "rounds": rounds,
    }
    _write(args.output, json.dumps(report, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_curves(args: argparse.Namespace) -> int:
    if not (0.0 <= args.start < args.stop <= SEPARABLE_EPSILON):
        print("error: grid must satisfy 0 <= start < stop <= 2/3", file=sys.stderr)
        return EXIT_USAGE
    grid = np.linspace(args.start, args.stop, args.points)
    columns = security.curve_grid(grid)
    lines = [CURVES_HEADER]
    for i in range(len(grid)):
        lines.append(
            ",".join(
                format(columns[name][i], ".10g")
                for name in CURVES_HEADER.split(",")
            )
        )
    _write(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_thresholds(args: argparse.Namespace) -> int:
    table = security.table_one_reference()
    rows = []
    failures = []
    jobs = [
        ("ck", security.ck_threshold, None),
        ("holevo_tetra", lambda: security.holevo_threshold("tetra"), None),
        ("holevo_six", lambda: security.holevo_threshold("six"), None),
        ("message_iteration_n1", lambda: security.message_attack_threshold("iteration"), ("message", "n1", "it")),
        ("message_final_pairing_n1", lambda: security.message_attack_threshold("finalPairing"), ("message", "n1", "FP")),
        ("message_renes_l1", lambda: security.message_attack_threshold("renesL1"), ("message", "L1", "FP")),
    ]
    for name, job, table_key in jobs:
        try:
            report = job()
        except ValueError as exc:
            failures.append(f"{name}: {exc}")
            continue
        reference = table[table_key] if table_key else report.reference
        rows.append(
            {
                "name": name,
                "computed": report.threshold,
                "reference": reference,
                "delta": report.threshold - reference,
            }
        )
    if args.format == "json":
        payload = {"schema": SCHEMA_THRESHOLDS, "rows": rows, "failures": failures}
        _write(args.output, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        lines = [f"{'name':28s} {'computed':>10s} {'reference':>10s} {'delta':>10s}"]
        for row in rows:
            lines.append(
                f"{row['name']:28s} {row['computed']:10.6f} "
                f"{row['reference']:10.4f} {row['delta']:+10.6f}"
            )
        for failure in failures:
            lines.append(f"FAILED {failure}")
        _write(args.output, "\n".join(lines) + "\n")
    if failures:
        return EXIT_FAILURE
    return EXIT_OK


def cmd_session(args: argparse.Namespace) -> int:
    config_kwargs = dict(
        epsilon=args.epsilon,
        pairs=args.pairs,
        source_seed=args.source_seed,
        rounds=args.rounds,
        final_pairing=args.final_pairing,
        sacrifice=args.sacrifice,
        policy=session.AcceptancePolicy(epsilon_max=args.epsilon_max),
    )
    if args.loopback:
        transport_a, transport_b = session.InMemoryTransport.pair()
        results: dict[str, session.SessionResult] = {}

        def runner(role: str, transport, seed: int) -> None:
            results[role] = session.run_session(
                role, transport, session.SessionConfig(session_seed=seed, **config_kwargs)
            )

        threads = [
            threading.Thread(target=runner, args=("alice", transport_a, args.seed)),
            threading.Thread(target=runner, args=("bob", transport_b, args.seed + 1)),
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        payload = {
            role: {
                "completed": r.completed,
                "abort_reason": r.abort_reason,
                "key_bits": int(len(r.key_bits)),
                "key_hex": r.key_hex,
                "acceptance": r.acceptance.as_record() if r.acceptance else None,
            }
            for role, r in sorted(results.items())
        }
        _write(args.output, json.dumps(payload, sort_keys=True, indent=2) + "\n")
        both = all(r.completed for r in results.values())
        return EXIT_OK if both else EXIT_FAILURE

    if args.listen is not None:
        transport = session.tcp_listen(args.listen)
    elif args.connect is not None:
        host, _, port = args.connect.rpartition(":")
        transport = session.tcp_connect(host, int(port))
    else:
        print("error: choose --loopback, --listen or --connect", file=sys.stderr)
        return EXIT_USAGE
    result = session.run_session(
        args.role,
        transport,
        session.SessionConfig(session_seed=args.seed, **config_kwargs),
    )
    if args.transcript_out:
        session.write_transcript(args.transcript_out, result.transcript)
    payload = {
        "role": result.role,
        "completed": result.completed,
        "abort_reason": result.abort_reason,
        "key_bits": int(len(result.key_bits)),
        "key_hex": result.key_hex,
        "acceptance": result.acceptance.as_record() if result.acceptance else None,
    }
    _write(args.output, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return EXIT_OK if result.completed else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tetraqkd",
        description="Tomographic QKD simulation and security analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample, twirl and sift one batch")
    sim.add_argument("--epsilon", type=float, required=True)
    sim.add_argument("--pairs", type=int, required=True)
    sim.add_argument("--rounds", type=int, default=3)
    sim.add_argument("--final-pairing", action="store_true", dest="final_pairing")
    sim.add_argument("--seed", type=int, default=_default_seed())
    sim.add_argument("--output", default="-")
    sim.set_defaults(func=cmd_simulate)

    cur = sub.add_parser("curves", help="CSV of the one-way security curves")
    cur.add_argument("--start", type=float, default=0.0)
    cur.add_argument("--stop", type=float, default=SEPARABLE_EPSILON)
    cur.add_argument("--points", type=int, default=67)
    cur.add_argument("--output", default="-")
    cur.set_defaults(func=cmd_curves)

    thr = sub.add_parser("thresholds", help="computed noise thresholds vs references")
    thr.add_argument("--format", choices=("text", "json"), default="text")
    thr.add_argument("--output", default="-")
    thr.set_defaults(func=cmd_thresholds)

    ses = sub.add_parser("session", help="run one peer of a key session")
    ses.add_argument("--role", choices=("alice", "bob"), default="alice")
    ses.add_argument("--loopback", action="store_true", help="run both peers in-process")
    ses.add_argument("--listen", type=int, default=None, metavar="PORT")
    ses.add_argument("--connect", default=None, metavar="HOST:PORT")
    ses.add_argument("--epsilon", type=float, default=0.0)
    ses.add_argument("--pairs", type=int, default=10000)
    ses.add_argument("--rounds", type=int, default=2)
    ses.add_argument("--final-pairing", action="store_true", dest="final_pairing")
    ses.add_argument("--sacrifice", type=int, default=2000)
    ses.add_argument("--epsilon-max", type=float, default=0.3)
    ses.add_argument("--source-seed", type=int, default=_default_seed())
    ses.add_argument("--seed", type=int, default=_default_seed())
    ses.add_argument("--transcript-out", default=None)
    ses.add_argument("--output", default="-")
    ses.set_defaults(func=cmd_session)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
