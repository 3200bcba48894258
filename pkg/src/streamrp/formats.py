"""Text formats: vote logs, vote streams, ledger snapshots, configs, reports.

All formats are line-oriented UTF-8.  Fractions serialize as ``num/den``
strings so reports stay exact.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .audit import FairnessVerdict, ReceiptProfile
from .core import TransactionId, VoteError, VoteSet
from .sim import (
    ConfigError,
    FaultStrategy,
    Honest,
    LivenessReport,
    ScenarioConfig,
    SimTrace,
    TargetedSwap,
    WindowShuffle,
    Withholder,
)
from .streaming import FUTURE, DecisionLedger, LedgerEntry, Status, StreamState

_TOKEN = re.compile(r"^[^\s,:]+$")


class ParseError(VoteError):
    """Input file failed to parse; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


def _check_token(token: str, line_no: int) -> str:
    if not _TOKEN.match(token):
        raise ParseError(line_no, f"invalid transaction id {token!r}")
    if token == FUTURE:
        raise ParseError(line_no, f"{FUTURE!r} is reserved")
    return token


def parse_vote_log(text: str) -> VoteSet:
    """Vote-log format: one ``replica_index: txid, txid, ...`` record per line.

    Blank lines and ``#`` comments are ignored.  Replica indices must be
    0..n-1, each appearing exactly once; an empty sequence after the colon is
    a valid (empty) vote.
    """
    records: dict[int, tuple[TransactionId, ...]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ParseError(line_no, "expected 'replica_index: txid, txid, ...'")
        head, _, tail = line.partition(":")
        try:
            replica = int(head.strip())
        except ValueError:
            raise ParseError(line_no, f"bad replica index {head.strip()!r}") from None
        if replica < 0:
            raise ParseError(line_no, f"negative replica index {replica}")
        if replica in records:
            raise ParseError(line_no, f"replica {replica} already has a record")
        items = [t.strip() for t in tail.split(",")] if tail.strip() else []
        seq = tuple(_check_token(t, line_no) for t in items if t)
        if len(set(seq)) != len(seq):
            raise ParseError(line_no, f"replica {replica} repeats a transaction")
        records[replica] = seq
    if not records:
        raise ParseError(1, "no vote records found")
    n = max(records) + 1
    missing = [i for i in range(n) if i not in records]
    if missing:
        raise ParseError(1, f"missing records for replicas {missing}")
    return VoteSet.from_sequences([records[i] for i in range(n)])


def dump_vote_log(votes: VoteSet) -> str:
    lines = [f"{v.replica}: {', '.join(v.sequence)}" for v in votes.votes]
    return "\n".join(lines) + "\n"


def parse_vote_stream(text: str) -> list[VoteSet]:
    """Blocks of cumulative vote logs separated by ``---`` lines.

    Each block restates every replica's full vote so far.  Replicas omitted
    from a later block are carried over unchanged from the previous one.
    """
    blocks: list[list[tuple[int, str]]] = [[]]
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped == "---":
            blocks.append([])
        else:
            blocks[-1].append((line_no, raw))
    steps: list[VoteSet] = []
    prev: VoteSet | None = None
    for block in blocks:
        body = "\n".join(raw for _, raw in block)
        if not body.strip():
            continue
        offset = block[0][0] - 1 if block else 0
        try:
            votes = parse_vote_log(body)
        except ParseError as exc:
            raise ParseError(exc.line_no + offset, str(exc).split(": ", 1)[1]) from None
        if prev is not None:
            if votes.n < prev.n:
                merged = list(votes.votes) + list(prev.votes[votes.n :])
                votes = VoteSet.from_sequences([v.sequence for v in merged])
        steps.append(votes)
        prev = votes
    if not steps:
        raise ParseError(1, "no vote blocks found")
    return steps


_STATUS_NAMES = {Status.ACCEPTED: "accept", Status.REJECTED: "reject"}
_STATUS_BY_NAME = {v: k for k, v in _STATUS_NAMES.items()}

LEDGER_MAGIC = "streamrp-ledger v1"


def dump_ledger_snapshot(state: StreamState) -> str:
    """Deterministic ledger serialization: entries sorted by class then seq."""
    lines = [LEDGER_MAGIC]
    lines.append(f"rounding: {state.rounding if state.rounding is not None else 'none'}")
    lines.append("emitted: " + ", ".join(state.ledger.emitted))
    entries = sorted(state.ledger.entries, key=lambda e: (-e.weight, e.seq))
    for e in entries:
        w = Fraction(e.weight)
        lines.append(
            f"{e.src} {e.dst} {_STATUS_NAMES[e.status]} "
            f"{w.numerator} {w.denominator} {e.seq}"
        )
    return "\n".join(lines) + "\n"


def load_ledger_snapshot(text: str) -> StreamState:
    lines = text.splitlines()
    if not lines or lines[0].strip() != LEDGER_MAGIC:
        raise ParseError(1, f"expected header {LEDGER_MAGIC!r}")
    if len(lines) < 3:
        raise ParseError(1, "truncated ledger snapshot")
    rounding_txt = lines[1].split(":", 1)[1].strip()
    rounding = None if rounding_txt == "none" else int(rounding_txt)
    emitted_txt = lines[2].split(":", 1)[1].strip()
    emitted = [t.strip() for t in emitted_txt.split(",") if t.strip()]
    entries: list[LedgerEntry] = []
    for line_no, raw in enumerate(lines[3:], start=4):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 6:
            raise ParseError(line_no, "expected 'src dst status num den seq'")
        src, dst, status_name, num, den, seq = parts
        if status_name not in _STATUS_BY_NAME:
            raise ParseError(line_no, f"unknown status {status_name!r}")
        entries.append(
            LedgerEntry(
                src,
                dst,
                _STATUS_BY_NAME[status_name],
                Fraction(int(num), int(den)),
                int(seq),
            )
        )
    state = StreamState(rounding=rounding)
    state.ledger.load(entries, emitted)
    return state


def _fraction_str(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_fraction(text: str) -> Fraction:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(int(num), int(den))
    return Fraction(int(text))


_FAULT_KINDS = {
    "honest": Honest,
    "window_shuffle": WindowShuffle,
    "targeted_swap": TargetedSwap,
    "withholder": Withholder,
}


def _fault_from_json(obj: Mapping) -> FaultStrategy:
    kind = obj.get("kind")
    if kind == "honest":
        return Honest()
    if kind == "window_shuffle":
        return WindowShuffle(window=int(obj["window"]))
    if kind == "targeted_swap":
        return TargetedSwap(pairs=tuple((a, b) for a, b in obj["pairs"]))
    if kind == "withholder":
        return Withholder(victims=frozenset(obj["victims"]))
    raise ConfigError(f"unknown fault kind {kind!r}")


def _fault_to_json(strategy: FaultStrategy) -> dict:
    if isinstance(strategy, Honest):
        return {"kind": "honest"}
    if isinstance(strategy, WindowShuffle):
        return {"kind": "window_shuffle", "window": strategy.window}
    if isinstance(strategy, TargetedSwap):
        return {"kind": "targeted_swap", "pairs": [list(p) for p in strategy.pairs]}
    if isinstance(strategy, Withholder):
        return {"kind": "withholder", "victims": sorted(strategy.victims)}
    raise ConfigError(f"unknown fault strategy {strategy!r}")


def scenario_from_json(text: str) -> ScenarioConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        config = ScenarioConfig(
            n=int(obj["n"]),
            delta=int(obj["delta"]),
            round_len=int(obj["round_len"]),
            completion_rounds=int(obj["completion_rounds"]),
            seed=int(obj["seed"]),
            schedule=tuple((int(t), str(tx)) for t, tx in obj["schedule"]),
            faults={
                int(i): _fault_from_json(spec)
                for i, spec in obj.get("faults", {}).items()
            },
            rounding_denominator=(
                int(obj["rounding_denominator"])
                if obj.get("rounding_denominator") is not None
                else None
            ),
            horizon=int(obj["horizon"]),
        )
    except KeyError as exc:
        raise ConfigError(f"config is missing field {exc.args[0]!r}") from None
    config.validate()
    return config


def scenario_to_json(config: ScenarioConfig) -> str:
    obj = {
        "n": config.n,
        "delta": config.delta,
        "round_len": config.round_len,
        "completion_rounds": config.completion_rounds,
        "seed": config.seed,
        "schedule": [[t, tx] for t, tx in config.schedule],
        "faults": {str(i): _fault_to_json(s) for i, s in sorted(config.faults.items())},
        "rounding_denominator": config.rounding_denominator,
        "horizon": config.horizon,
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def trace_lines(trace: SimTrace) -> Iterable[str]:
    """Event-log export: one ``tick<TAB>kind<TAB>payload`` line per event."""
    for tick, kind, payload in trace.events:
        yield f"{tick}\t{kind}\t{payload}"


def receipts_to_vote_log(profile: ReceiptProfile) -> str:
    return dump_vote_log(VoteSet.from_sequences(profile.received))


def verdicts_to_json(verdicts: Sequence[FairnessVerdict]) -> dict:
    records = []
    for v in verdicts:
        rec: dict = {
            "gamma": _fraction_str(v.gamma),
            "delta": _fraction_str(v.delta),
            "result": "pass" if v.passed else "violation",
        }
        if v.violation is not None:
            pair, note = v.violation
            rec["pair"] = list(pair)
            rec["note"] = note
        if v.witnesses:
            rec["witnesses"] = [
                {
                    "pair": list(w.pair),
                    "path": list(w.path),
                    "link_counts": list(w.link_counts),
                }
                for w in v.witnesses
            ]
        records.append(rec)
    return {"verdicts": records, "all_pass": all(v.passed for v in verdicts)}


def verdicts_table(verdicts: Sequence[FairnessVerdict]) -> str:
    lines = [f"{'gamma':>8} {'delta':>8} {'result':>10}  detail"]
    for v in verdicts:
        if v.passed:
            detail = f"{len(v.witnesses)} reversed pair(s) justified"
        else:
            pair, _ = v.violation
            detail = f"pair {pair[0]} < {pair[1]} reversed with no justifying path"
        lines.append(
            f"{_fraction_str(v.gamma):>8} {_fraction_str(v.delta):>8} "
            f"{'pass' if v.passed else 'VIOLATION':>10}  {detail}"
        )
    return "\n".join(lines) + "\n"


def liveness_to_json(report: LivenessReport) -> dict:
    return {
        "bound": report.bound,
        "passed": report.passed,
        "entries": [
            {
                "tx": e.txid,
                "send": e.send,
                "emit": e.emit,
                "delay": e.delay,
                "ok": e.ok,
            }
            for e in report.entries
        ],
    }


def liveness_table(report: LivenessReport) -> str:
    lines = [f"bound: {report.bound} ticks"]
    lines.append(f"{'tx':>12} {'send':>6} {'emit':>6} {'delay':>6}  status")
    for e in report.entries:
        emit = "-" if e.emit is None else str(e.emit)
        delay = "-" if e.delay is None else str(e.delay)
        status = "ok" if e.ok else ("NEVER EMITTED" if e.emit is None else "LATE")
        lines.append(f"{e.txid:>12} {e.send:>6} {emit:>6} {delay:>6}  {status}")
    return "\n".join(lines) + "\n"
