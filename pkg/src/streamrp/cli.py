"""Command-line surface: order, stream, simulate, audit, oracle-check.

Exit codes: 0 all checks pass; 2 parse/config failure; 3 fairness violation;
4 liveness violation; 5 internal assertion failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import formats
from .audit import ReceiptProfile, audit_all_gamma, audit_pairwise_fairness
from .core import (
    IncompleteVoteError,
    VoteError,
    VoteSet,
    build_ordering_graph,
    ranked_pairs,
    run_ranked_pairs,
)
from .sim import measure_liveness, run_simulation
from .streaming import (
    InternalFault,
    PrefixViolationError,
    StreamState,
    check_extension,
    materialized_edge_order,
    stream_step_live,
    stream_step_preliminary,
)
from .sim import descending_pairs_tiebreak
from .core import lexicographic_tiebreak

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_FAIRNESS = 3
EXIT_LIVENESS = 4
EXIT_INTERNAL = 5

TIEBREAKS = {
    "lexicographic": lexicographic_tiebreak,
    "descending-pairs": descending_pairs_tiebreak,
}


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Report:
    """Reproducible run report: identical inputs and seed give an identical
    ``stable`` section; wall time lives outside it."""

    def __init__(self, command: str):
        self.command = command
        self.started = time.monotonic()
        self.inputs: dict[str, str] = {}
        self.seed: int | None = None
        self.results: dict = {}

    def add_input(self, path: Path) -> None:
        self.inputs[str(path)] = _digest_file(path)

    def write(self, path: Path | None) -> None:
        if path is None:
            return
        doc = {
            "stable": {
                "command": self.command,
                "inputs": self.inputs,
                "seed": self.seed,
                "results": self.results,
            },
            "wall_ms": round((time.monotonic() - self.started) * 1000, 3),
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_order(args: argparse.Namespace) -> int:
    report = _Report("order")
    path = Path(args.votes_file)
    votes = formats.parse_vote_log(path.read_text())
    report.add_input(path)
    order = ranked_pairs(votes)
    for t in order:
        print(t)
    report.results["order"] = list(order)
    report.write(args.report and Path(args.report))
    return EXIT_OK


def cmd_stream(args: argparse.Namespace) -> int:
    report = _Report("stream")
    path = Path(args.votes_stream_file)
    steps = formats.parse_vote_stream(path.read_text())
    report.add_input(path)
    emissions: list[tuple[int, str]] = []

    if args.variant == "live":
        if args.ledger_in:
            state = formats.load_ledger_snapshot(Path(args.ledger_in).read_text())
            if args.round is not None and state.rounding != args.round:
                raise VoteError(
                    f"ledger was built with rounding {state.rounding}, "
                    f"flag says {args.round}"
                )
        else:
            state = StreamState(rounding=args.round)
        for index, votes in enumerate(steps):
            result = stream_step_live(state, votes)
            for t in result.newly_emitted:
                emissions.append((index, t))
                print(f"{index}\t{t}")
        if args.ledger_out:
            Path(args.ledger_out).write_text(formats.dump_ledger_snapshot(state))
    else:
        tiebreak = TIEBREAKS[args.tiebreak]
        prior: tuple[str, ...] = ()
        previous: VoteSet | None = None
        for index, votes in enumerate(steps):
            if previous is not None:
                check_extension(previous, votes)
            step = stream_step_preliminary(votes, tiebreak, rounding=args.round)
            if step.output[: len(prior)] != prior:
                raise InternalFault("preliminary output does not extend prior output")
            for t in step.output[len(prior) :]:
                emissions.append((index, t))
                print(f"{index}\t{t}")
            prior = step.output
            previous = votes

    report.results["emissions"] = [[i, t] for i, t in emissions]
    report.write(args.report and Path(args.report))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    report = _Report("simulate")
    config_path = Path(args.config_file)
    config = formats.scenario_from_json(config_path.read_text())
    report.add_input(config_path)
    report.seed = config.seed

    trace = run_simulation(config)
    liveness = measure_liveness(trace)
    f = len(config.faulty_replicas)
    delta = Fraction(f, config.n)
    if config.rounding_denominator is not None:
        delta += Fraction(1, 2 * config.rounding_denominator)
    output = tuple(t for _, t in trace.output_events)
    verdicts = audit_all_gamma(trace.receipts, output, delta)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.tsv").write_text(
        "\n".join(formats.trace_lines(trace)) + "\n" if trace.events else ""
    )
    (out_dir / "receipts.votelog").write_text(
        formats.receipts_to_vote_log(trace.receipts)
    )
    (out_dir / "output.txt").write_text("".join(t + "\n" for t in output))
    (out_dir / "reported.votelog").write_text(
        formats.dump_vote_log(trace.receipts.reported)
    )
    (out_dir / "audit.json").write_text(
        json.dumps(formats.verdicts_to_json(verdicts), indent=2) + "\n"
    )
    (out_dir / "audit.txt").write_text(formats.verdicts_table(verdicts))
    (out_dir / "liveness.json").write_text(
        json.dumps(formats.liveness_to_json(liveness), indent=2) + "\n"
    )
    (out_dir / "liveness.txt").write_text(formats.liveness_table(liveness))

    report.results["output"] = list(output)
    report.results["audit_all_pass"] = all(v.passed for v in verdicts)
    report.results["liveness_pass"] = liveness.passed
    report.results["delta"] = f"{delta.numerator}/{delta.denominator}"
    report.write(args.report and Path(args.report))

    print(f"emitted {len(output)}/{len(config.schedule)} transactions")
    print(f"audit: {'pass' if all(v.passed for v in verdicts) else 'VIOLATION'}")
    print(f"liveness: {'pass' if liveness.passed else 'VIOLATION'}")
    if not all(v.passed for v in verdicts):
        return EXIT_FAIRNESS
    if not liveness.passed:
        return EXIT_LIVENESS
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    report = _Report("audit")
    receipts_path = Path(args.receipts_file)
    output_path = Path(args.output_file)
    received = formats.parse_vote_log(receipts_path.read_text())
    output = tuple(
        line.strip()
        for line in output_path.read_text().splitlines()
        if line.strip() and not line.startswith("#")
    )
    report.add_input(receipts_path)
    report.add_input(output_path)
    profile = ReceiptProfile(received=received.sequences())
    delta = formats.parse_fraction(args.delta)
    if args.gamma_grid:
        gammas = [formats.parse_fraction(g) for g in args.gamma_grid.split(",")]
        verdicts = [audit_pairwise_fairness(profile, output, g, delta) for g in gammas]
    else:
        verdicts = audit_all_gamma(profile, output, delta)
    sys.stdout.write(formats.verdicts_table(verdicts))
    if args.json:
        Path(args.json).write_text(
            json.dumps(formats.verdicts_to_json(verdicts), indent=2) + "\n"
        )
    report.results["verdicts"] = formats.verdicts_to_json(verdicts)
    report.write(args.report and Path(args.report))
    return EXIT_OK if all(v.passed for v in verdicts) else EXIT_FAIRNESS


def cmd_oracle_check(args: argparse.Namespace) -> int:
    """Random-instance comparison of the streaming output against the
    non-streaming order under the materialized tiebreak."""
    report = _Report("oracle-check")
    report.seed = args.seed
    rng = random.Random(args.seed)
    lo_n, hi_n = args.min_replicas, args.max_replicas
    lo_m, hi_m = args.min_transactions, args.max_transactions
    checked = 0
    for trial in range(args.instances):
        n = rng.randint(lo_n, hi_n)
        m = rng.randint(lo_m, hi_m)
        txs = [f"x{j}" for j in range(m)]
        full = VoteSet.from_sequences([tuple(rng.sample(txs, m)) for _ in range(n)])
        state = StreamState(prune=False)
        lens = [sorted(rng.randint(0, m) for _ in range(2)) for _ in range(n)]
        logs = []
        for s in range(2):
            step_votes = VoteSet.from_sequences(
                [full.votes[i].sequence[: lens[i][s]] for i in range(n)]
            )
            stream_step_live(state, step_votes)
            logs.append(state.output)
        stream_step_live(state, full)
        logs.append(state.output)
        for a, b in zip(logs, logs[1:]):
            if b[: len(a)] != a:
                raise InternalFault(f"instance {trial}: output log shrank")
        graph = build_ordering_graph(full)
        order = materialized_edge_order(
            state.ledger, dict(graph.edges()), state.output
        )
        reference = run_ranked_pairs(graph, order).order
        if reference != state.output:
            raise InternalFault(
                f"instance {trial}: stream output {state.output} != "
                f"reference order {reference}"
            )
        checked += 1
    print(f"oracle-check: {checked} instances, all stream outputs matched")
    report.results["instances"] = checked
    report.write(args.report and Path(args.report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamrp",
        description="Streaming Ranked Pairs ordering, simulation, and auditing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("order", help="one-shot order from a complete vote log")
    p.add_argument("votes_file")
    p.add_argument("--report", help="write a JSON run report here")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("stream", help="replay a vote stream incrementally")
    p.add_argument("votes_stream_file")
    p.add_argument(
        "--variant", choices=("preliminary", "live"), default="live",
        help="fixed-tiebreak streamer or the deferring live engine",
    )
    p.add_argument("--round", type=int, default=None, metavar="K",
                   help="round weights to the nearest 1/K")
    p.add_argument("--tiebreak", choices=sorted(TIEBREAKS), default="lexicographic",
                   help="within-class edge order for the preliminary variant")
    p.add_argument("--ledger-out", help="write the final ledger snapshot here")
    p.add_argument("--ledger-in", help="resume from a ledger snapshot")
    p.add_argument("--report")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("simulate", help="run a scenario config end to end")
    p.add_argument("config_file")
    p.add_argument("--out-dir", required=True,
                   help="directory for trace, receipts, output, and reports")
    p.add_argument("--report")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("audit", help="audit an output order against receipts")
    p.add_argument("receipts_file", help="vote-log file of true receipt orders")
    p.add_argument("output_file", help="one emitted transaction id per line")
    p.add_argument("--delta", default="0", help="tolerated misreport fraction, e.g. 1/7")
    p.add_argument("--gamma-grid", default=None,
                   help="comma-separated thresholds; default is every i/n in (1/2, 1]")
    p.add_argument("--json", help="write the machine-readable verdicts here")
    p.add_argument("--report")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser(
        "oracle-check",
        help="compare streaming output against the one-shot order on random instances",
    )
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-replicas", type=int, default=3)
    p.add_argument("--max-replicas", type=int, default=7)
    p.add_argument("--min-transactions", type=int, default=3)
    p.add_argument("--max-transactions", type=int, default=8)
    p.add_argument("--report")
    p.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (formats.ParseError, IncompleteVoteError, PrefixViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (VoteError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InternalFault as exc:
        print(f"internal fault: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
