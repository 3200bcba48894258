"""Deterministic discrete-time simulation of replicas feeding the stream engine.

Time is integer ticks.  Clients send transactions per a fixed schedule; each
replica's delivery delay for each transaction is drawn uniformly from
[0, delta) out of one seeded generator, so identical configs produce
bit-identical traces.  Replicas submit votes at round boundaries; votes a
replica withholds too long are completed on its behalf, appended in digest
order.  The live stream engine runs once per round.
"""

from __future__ import annotations

import functools
import hashlib
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .audit import ReceiptProfile
from .core import TransactionId, VoteSet, txid_digest
from .streaming import StreamState, stream_step_live


class ConfigError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class Honest:
    kind = "honest"


@dataclass(frozen=True)
class WindowShuffle:
    """Report receipt order shuffled within consecutive windows.

    A window is reported only once fully received, which keeps successive
    reports extensions of each other.
    """

    window: int
    kind = "window_shuffle"


@dataclass(frozen=True)
class TargetedSwap:
    """Report the receipt order with the given pairs' positions exchanged."""

    pairs: tuple[tuple[TransactionId, TransactionId], ...]
    kind = "targeted_swap"


@dataclass(frozen=True)
class Withholder:
    """Never report the victim transactions (until completed over)."""

    victims: frozenset[TransactionId]
    kind = "withholder"


FaultStrategy = Honest | WindowShuffle | TargetedSwap | Withholder


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    delta: int
    round_len: int
    completion_rounds: int
    seed: int
    schedule: tuple[tuple[int, TransactionId], ...]
    faults: Mapping[int, FaultStrategy] = field(default_factory=dict)
    rounding_denominator: int | None = None
    horizon: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError("need at least one replica")
        if self.delta < 1:
            raise ConfigError("delta must be >= 1")
        if self.round_len < 1:
            raise ConfigError("round_len must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.completion_rounds * self.round_len < self.delta:
            raise ConfigError(
                "completion_rounds * round_len must cover delta, or honest "
                "replicas could be completed over"
            )
        ids = [t for _, t in self.schedule]
        if len(set(ids)) != len(ids):
            raise ConfigError("schedule repeats a transaction id")
        for send, t in self.schedule:
            if not 0 <= send < self.horizon:
                raise ConfigError(f"send time {send} for {t!r} outside horizon")
        for i in self.faults:
            if not 0 <= i < self.n:
                raise ConfigError(f"fault strategy for unknown replica {i}")
        if self.rounding_denominator is not None and self.rounding_denominator < 1:
            raise ConfigError("rounding denominator must be >= 1")

    @property
    def faulty_replicas(self) -> frozenset[int]:
        return frozenset(
            i for i, s in self.faults.items() if not isinstance(s, Honest)
        )


@dataclass
class SimTrace:
    config: ScenarioConfig
    receipts: ReceiptProfile
    round_votes: list[tuple[int, VoteSet]]
    output_events: list[tuple[int, TransactionId]]
    fabrications: list[tuple[int, int, TransactionId]]
    events: list[tuple[int, str, str]]

    def emit_tick(self, t: TransactionId) -> int | None:
        for tick, tx in self.output_events:
            if tx == t:
                return tick
        return None


def _shuffle_window(
    block: Sequence[TransactionId], seed: int, replica: int, block_index: int
) -> list[TransactionId]:
    raw = hashlib.blake2b(
        f"{seed}:{replica}:{block_index}".encode(), digest_size=8
    ).digest()
    rng = random.Random(int.from_bytes(raw, "big"))
    shuffled = list(block)
    rng.shuffle(shuffled)
    return shuffled


def _report(
    strategy: FaultStrategy,
    replica: int,
    received_so_far: Sequence[TransactionId],
    full_receipt_order: Sequence[TransactionId],
    seed: int,
) -> list[TransactionId]:
    if isinstance(strategy, Honest):
        return list(received_so_far)
    if isinstance(strategy, Withholder):
        return [t for t in received_so_far if t not in strategy.victims]
    if isinstance(strategy, WindowShuffle):
        out: list[TransactionId] = []
        w = strategy.window
        for b in range(len(received_so_far) // w):
            out.extend(
                _shuffle_window(received_so_far[b * w : (b + 1) * w], seed, replica, b)
            )
        return out
    if isinstance(strategy, TargetedSwap):
        virtual = list(full_receipt_order)
        for a, b in strategy.pairs:
            if a in virtual and b in virtual:
                ia, ib = virtual.index(a), virtual.index(b)
                virtual[ia], virtual[ib] = virtual[ib], virtual[ia]
        have = set(received_so_far)
        out = []
        for t in virtual:
            if t not in have:
                break
            out.append(t)
        return out
    raise ConfigError(f"unknown fault strategy {strategy!r}")


def fabricate_missing_votes(
    current_round: int,
    committed: Sequence[Sequence[TransactionId]],
    first_reported_round: Mapping[TransactionId, int],
    completion_rounds: int,
) -> dict[int, list[TransactionId]]:
    """Votes to append on behalf of replicas still missing overdue transactions.

    A transaction first reported in round T is overdue for any replica whose
    vote does not contain it by round T + completion_rounds.  Appended
    transactions are sorted by their stable digest.
    """
    due = [
        t
        for t, first in first_reported_round.items()
        if first <= current_round - completion_rounds
    ]
    appended: dict[int, list[TransactionId]] = {}
    for i, vote in enumerate(committed):
        have = set(vote)
        missing = [t for t in due if t not in have]
        if missing:
            missing.sort(key=lambda t: (txid_digest(t), t))
            appended[i] = missing
    return appended


def run_simulation(config: ScenarioConfig) -> SimTrace:
    """Run the event loop and return the full deterministic trace."""
    config.validate()
    rng = random.Random(config.seed)
    n = config.n

    receipt_times: list[list[tuple[int, int, TransactionId]]] = [[] for _ in range(n)]
    events: list[tuple[int, str, str]] = []
    for send, tx in config.schedule:
        events.append((send, "send", tx))
        for i in range(n):
            delay = rng.randrange(config.delta)
            receipt_times[i].append((send + delay, send, tx))
    for i in range(n):
        receipt_times[i].sort()
        for tick, _, tx in receipt_times[i]:
            events.append((tick, "receipt", f"{i} {tx}"))

    full_orders = [tuple(tx for _, _, tx in receipt_times[i]) for i in range(n)]
    strategies = {i: config.faults.get(i, Honest()) for i in range(n)}

    committed: list[list[TransactionId]] = [[] for _ in range(n)]
    first_reported: dict[TransactionId, int] = {}
    fabrications: list[tuple[int, int, TransactionId]] = []
    round_votes: list[tuple[int, VoteSet]] = []
    output_events: list[tuple[int, TransactionId]] = []
    state = StreamState(rounding=config.rounding_denominator)

    ticks = range(config.round_len, config.horizon + 1, config.round_len)
    for round_no, tick in enumerate(ticks, start=1):
        for i in range(n):
            so_far = [tx for t, _, tx in receipt_times[i] if t <= tick]
            proposal = _report(
                strategies[i], i, so_far, full_orders[i], config.seed
            )
            have = set(committed[i])
            committed[i].extend(t for t in proposal if t not in have)
        for i in range(n):
            for t in committed[i]:
                first_reported.setdefault(t, round_no)
        appended = fabricate_missing_votes(
            round_no, committed, first_reported, config.completion_rounds
        )
        for i, extra in sorted(appended.items()):
            committed[i].extend(extra)
            for t in extra:
                fabrications.append((tick, i, t))
                events.append((tick, "fabricate", f"{i} {t}"))

        votes = VoteSet.from_sequences(committed)
        round_votes.append((tick, votes))
        step = stream_step_live(state, votes)
        for t in step.newly_emitted:
            output_events.append((tick, t))
            events.append((tick, "emit", t))

    final_votes = VoteSet.from_sequences(committed)
    profile = ReceiptProfile(
        received=tuple(full_orders),
        faulty=config.faulty_replicas,
        reported=final_votes,
    )
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return SimTrace(config, profile, round_votes, output_events, fabrications, events)


@dataclass(frozen=True)
class LivenessEntry:
    txid: TransactionId
    send: int
    emit: int | None
    bound: int

    @property
    def delay(self) -> int | None:
        return None if self.emit is None else self.emit - self.send

    @property
    def ok(self) -> bool:
        return self.delay is not None and self.delay <= self.bound


@dataclass(frozen=True)
class LivenessReport:
    bound: int
    entries: tuple[LivenessEntry, ...]

    @property
    def violations(self) -> tuple[LivenessEntry, ...]:
        return tuple(e for e in self.entries if not e.ok)

    @property
    def passed(self) -> bool:
        return not self.violations


def liveness_bound(config: ScenarioConfig) -> int:
    """Emission-delay bound checked by the auditor.

    (n+1)*delta for the plain engine, (k+2)*delta when weights are rounded to
    1/k, plus two rounds of slack because votes are only visible and output
    only produced at round boundaries.
    """
    k = config.rounding_denominator
    chain = (k + 2) if k is not None else (config.n + 1)
    return chain * config.delta + 2 * config.round_len


def measure_liveness(trace: SimTrace) -> LivenessReport:
    bound = liveness_bound(trace.config)
    emitted = {tx: tick for tick, tx in trace.output_events}
    entries = tuple(
        LivenessEntry(tx, send, emitted.get(tx), bound)
        for send, tx in trace.config.schedule
    )
    return LivenessReport(bound, entries)


def generate_impossibility_instance(
    n: int, gamma: Fraction
) -> tuple[ReceiptProfile, ReceiptProfile]:
    """Two receipt worlds no single output can be exactly gamma-minimal in.

    Replicas split into k groups that receive rotations of t1..tk; the
    leftover f replicas report the first group's order in both worlds but
    truly received the first group's order in one world and the second
    group's in the other.  Reported votes are bitwise identical across the
    worlds, yet each world's receipt dependencies force a different total
    order.
    """
    gamma = Fraction(gamma)
    if not Fraction(1, 2) < gamma < 1:
        raise ConfigError("need 1/2 < gamma < 1")
    m = -((-gamma * n).__floor__())  # ceil(gamma * n)
    group = n - m
    if group < 1:
        raise ConfigError(f"gamma={gamma} leaves no room for disagreeing groups")
    k = n // group
    f = n % group
    if f == 0:
        raise ConfigError(
            f"n={n}, gamma={gamma} leaves no leftover replicas to act faulty"
        )
    if k < 2:
        raise ConfigError(f"n={n}, gamma={gamma} yields a single group")

    txs = [f"t{i}" for i in range(1, k + 1)]
    rotations = [tuple(txs[i:] + txs[:i]) for i in range(k)]

    def world(faulty_received: tuple[TransactionId, ...]) -> ReceiptProfile:
        received: list[tuple[TransactionId, ...]] = []
        reported: list[tuple[TransactionId, ...]] = []
        for g in range(k):
            for _ in range(group):
                received.append(rotations[g])
                reported.append(rotations[g])
        for _ in range(f):
            received.append(faulty_received)
            reported.append(rotations[0])
        return ReceiptProfile(
            received=tuple(received),
            faulty=frozenset(range(k * group, n)),
            reported=VoteSet.from_sequences(reported),
        )

    return world(rotations[0]), world(rotations[1])


def _pair_cmp(e1: tuple[str, str], e2: tuple[str, str]) -> int:
    hi1, lo1 = max(e1), min(e1)
    hi2, lo2 = max(e2), min(e2)
    if hi1 != hi2:
        return -1 if hi1 > hi2 else 1  # higher pair first
    if lo1 != lo2:
        return -1 if lo1 > lo2 else 1
    d1 = 0 if e1 == (hi1, lo1) else 1  # (high, low) direction first
    d2 = 0 if e2 == (hi2, lo2) else 1
    if d1 != d2:
        return d1 - d2
    return 0


#: Within a weight class, visit the pair with the largest ids first, and the
#: (higher id -> lower id) direction just before its reversal.  Against the
#: alternating-swap stream below, a fixed-tiebreak streamer never emits.
descending_pairs_tiebreak = functools.cmp_to_key(_pair_cmp)


def generate_nonlive_instance(length: int):
    """Two-replica alternating-swap vote prefixes plus the starving tiebreak.

    Replica 0 receives (t2, t1, t4, t3, ...), replica 1 (t1, t3, t2, t5, t4,
    ...).  Adjacent-index pairs weigh 1/2 and everything else is unanimous.
    Returns the vote set truncated to ``length`` entries per replica and the
    tiebreak key under which the fixed-order streamer emits nothing.
    """
    if length < 4 or length % 2:
        raise ConfigError("length must be even and >= 4")
    if length > 998:
        raise ConfigError("length above 998 would break the fixed id width")

    # Fixed width keeps ids identical across truncation lengths, so longer
    # prefixes of the same infinite stream extend shorter ones.
    def tid(i: int) -> str:
        return f"t{i:03d}"

    first: list[str] = []
    i = 1
    while len(first) < length:
        first.extend([tid(2 * i), tid(2 * i - 1)])
        i += 1
    second: list[str] = [tid(1)]
    i = 1
    while len(second) < length:
        second.extend([tid(2 * i + 1), tid(2 * i)])
        i += 1
    votes = VoteSet.from_sequences([first[:length], second[:length]])
    return votes, descending_pairs_tiebreak
