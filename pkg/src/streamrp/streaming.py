"""Streaming Ranked Pairs over partially-voted transaction streams.

Two engine variants:

* :func:`stream_step_preliminary` follows the fixed-tiebreak streaming
  construction.  It is monotonic but a bad tiebreak can starve it forever.
* :func:`stream_step_live` defers edges that would become indeterminate to the
  back of their weight class, materializing a tiebreak on the fly.  Final
  decisions and the materialized within-class order are carried across
  invocations in a :class:`DecisionLedger`, which doubles as the oracle that
  keeps re-runs cheap and the output monotone.

Both operate on the streamed ordering graph: the pairwise graph over settled
transactions (voted on by every replica) plus a synthetic "future" vertex
standing in for everything not yet fully voted.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .core import (
    Edge,
    Neighborhoods,
    TiebreakKey,
    TransactionId,
    VoteError,
    VoteSet,
    lexicographic_tiebreak,
    pairwise_weights,
    topological_order,
)

# Synthetic vertex standing in for all transactions not yet voted on by every
# replica.  Vote parsers reject this token as a transaction id.
FUTURE: TransactionId = "<future>"


class InternalFault(Exception):
    """A streaming invariant that must hold was violated (fatal assertion)."""


class PrefixViolationError(VoteError):
    """A replica's new vote reorders or drops part of its earlier prefix."""

    def __init__(self, replica: int, position: int):
        self.replica = replica
        self.position = position
        super().__init__(
            f"replica {replica} contradicts its earlier vote at position {position}"
        )


def check_extension(earlier: VoteSet, current: VoteSet) -> None:
    if current.n != earlier.n:
        raise VoteError(
            f"replica count changed between invocations ({earlier.n} -> {current.n})"
        )
    for prev, cur in zip(earlier.votes, current.votes):
        head = cur.sequence[: len(prev.sequence)]
        if head != prev.sequence:
            for i, (a, b) in enumerate(zip(prev.sequence, head)):
                if a != b:
                    raise PrefixViolationError(cur.replica, i)
            raise PrefixViolationError(cur.replica, len(head))


@dataclass(frozen=True)
class StreamedOrderingGraph:
    """Pairwise weights over settled transactions plus the future vertex.

    ``future_in`` holds the settled transactions with a weight-1 edge from the
    future vertex: some pending transaction precedes them in at least one
    vote.  Every settled transaction implicitly has a weight-1 edge to the
    future vertex.
    """

    n: int
    settled: frozenset[TransactionId]
    pending: frozenset[TransactionId]
    weights: Mapping[Edge, Fraction]
    future_in: frozenset[TransactionId]

    def weight(self, a: TransactionId, b: TransactionId) -> Fraction:
        return self.weights[(a, b)]

    def neighborhoods(self, t: TransactionId) -> Neighborhoods:
        if t not in self.settled:
            raise VoteError(f"unknown transaction {t!r}")
        pre, conc, sub = set(), set(), set()
        for other in self.settled:
            if other == t:
                continue
            w = self.weights[(other, t)]
            if w == 1:
                pre.add(other)
            elif w == 0:
                sub.add(other)
            else:
                conc.add(other)
        return Neighborhoods(frozenset(pre), frozenset(conc), frozenset(sub))


def build_streamed_graph(votes: VoteSet) -> StreamedOrderingGraph:
    """Settled/pending split, pairwise weights, and future-vertex edges."""
    universe = votes.transactions()
    settled = frozenset(
        t for t in universe if all(t in set(v.sequence) for v in votes.votes)
    )
    pending = universe - settled
    weights = pairwise_weights(votes.sequences(), settled, votes.n)
    future_in: set[TransactionId] = set()
    for vote in votes.votes:
        pending_seen = False
        for t in vote.sequence:
            if t in pending:
                pending_seen = True
            elif pending_seen:
                future_in.add(t)
    return StreamedOrderingGraph(
        votes.n, settled, pending, weights, frozenset(future_in)
    )


def round_graph(graph: StreamedOrderingGraph, k: int) -> StreamedOrderingGraph:
    """Round every pairwise weight to the nearest 1/k, halves rounding up.

    Future-vertex weights are already 0 or 1 and are unchanged.  Rounded
    graphs no longer satisfy the weight-complement invariant; only the
    relative order of weights matters downstream.
    """
    if k < 1:
        raise ValueError("rounding denominator must be >= 1")
    rounded = {
        e: Fraction(math.floor(w * k + Fraction(1, 2)), k)
        for e, w in graph.weights.items()
    }
    return StreamedOrderingGraph(
        graph.n, graph.settled, graph.pending, rounded, graph.future_in
    )


def locality_set(graph: StreamedOrderingGraph, edge: Edge) -> frozenset[TransactionId]:
    """Vertices a deciding path for ``edge`` may visit.

    Settled transactions minus the unanimous successors of the source and the
    unanimous predecessors of the target, plus both endpoints and the future
    vertex.
    """
    src, dst = edge
    if src not in graph.settled or dst not in graph.settled:
        raise VoteError("locality sets are defined for settled transactions only")
    r_src = {t for t in graph.settled if t != src and graph.weights[(t, src)] == 0}
    p_dst = {t for t in graph.settled if t != dst and graph.weights[(t, dst)] == 1}
    return frozenset(graph.settled - r_src - p_dst) | {src, dst, FUTURE}


class Status(enum.Enum):
    ACCEPTED = "accept"  # determinate accept, final across invocations
    REJECTED = "reject"  # final across invocations
    INDETERMINATE = "indeterminate"  # may become either later

    def __repr__(self) -> str:  # keeps test diffs readable
        return self.name


class DecisionMap:
    """Edge statuses plus adjacency views for the two path searches."""

    def __init__(self) -> None:
        self.status: dict[Edge, Status] = {}
        self._out_det: dict[TransactionId, set[TransactionId]] = defaultdict(set)
        self._out_any: dict[TransactionId, set[TransactionId]] = defaultdict(set)

    def add(self, edge: Edge, status: Status) -> None:
        self.status[edge] = status
        a, b = edge
        if status is Status.ACCEPTED:
            self._out_det[a].add(b)
            self._out_any[a].add(b)
        elif status is Status.INDETERMINATE:
            self._out_any[a].add(b)

    def items(self) -> Iterable[tuple[Edge, Status]]:
        return self.status.items()

    def find_path(
        self,
        start: TransactionId,
        goal: TransactionId,
        allowed: frozenset[TransactionId],
        determinate_only: bool,
    ) -> tuple[TransactionId, ...] | None:
        adjacency = self._out_det if determinate_only else self._out_any
        parent: dict[TransactionId, TransactionId] = {start: start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for nxt in sorted(adjacency.get(node, set()) & allowed):
                if nxt in parent:
                    continue
                parent[nxt] = node
                if nxt == goal:
                    path = [goal]
                    while path[-1] != start:
                        path.append(parent[path[-1]])
                    return tuple(reversed(path))
                queue.append(nxt)
        return None


def _init_future_edges(dm: DecisionMap, graph: StreamedOrderingGraph) -> None:
    # All weight-1 edges incident to the future vertex start indeterminate.
    for t in graph.settled:
        dm.add((t, FUTURE), Status.INDETERMINATE)
    for t in graph.future_in:
        dm.add((FUTURE, t), Status.INDETERMINATE)


def _evaluate(
    dm: DecisionMap, graph: StreamedOrderingGraph, edge: Edge
) -> tuple[Status, tuple[TransactionId, ...] | None]:
    """Decide one edge against the current decision map.

    Reject when a determinate-only reverse path exists; accept when no
    determinate-or-indeterminate reverse path exists; otherwise the edge is
    indeterminate and the blocking path is returned.
    """
    src, dst = edge
    allowed = locality_set(graph, edge)
    det = dm.find_path(dst, src, allowed, determinate_only=True)
    if det is not None:
        return Status.REJECTED, det
    any_path = dm.find_path(dst, src, allowed, determinate_only=False)
    if any_path is not None:
        return Status.INDETERMINATE, any_path
    return Status.ACCEPTED, None


def _weight_classes(
    graph: StreamedOrderingGraph,
) -> list[tuple[Fraction, list[Edge]]]:
    by_weight: dict[Fraction, list[Edge]] = defaultdict(list)
    for edge, w in graph.weights.items():
        if w > 0:
            by_weight[w].append(edge)
    return sorted(by_weight.items(), key=lambda item: item[0], reverse=True)


def _path_edges(path: Sequence[TransactionId]) -> list[Edge]:
    return [(path[i], path[i + 1]) for i in range(len(path) - 1)]


def emit_prefix(
    decisions: DecisionMap,
    graph: StreamedOrderingGraph,
    prior: Sequence[TransactionId],
) -> tuple[TransactionId, ...]:
    """Topological prefix of settled transactions that is safe to publish.

    Sorts by determinate accepted edges (ties by id) and cuts before the
    first transaction incident to a blocking indeterminate edge.  Edges into
    the future vertex never block; edges out of it and indeterminate edges
    between settled transactions do.  The result must extend ``prior``.
    """
    prior = tuple(prior)
    blocked: set[TransactionId] = set()
    edges: list[Edge] = []
    for (a, b), status in decisions.items():
        if status is Status.ACCEPTED and a != FUTURE and b != FUTURE:
            edges.append((a, b))
        elif status is Status.INDETERMINATE and b != FUTURE:
            if a == FUTURE:
                blocked.add(b)
            else:
                blocked.add(a)
                blocked.add(b)
    # Previously emitted transactions sort first, in their emitted order.
    unemitted = graph.settled - set(prior)
    for earlier, later in zip(prior, prior[1:]):
        edges.append((earlier, later))
    if prior:
        last = prior[-1]
        edges.extend((last, t) for t in unemitted)
    order = topological_order(graph.settled, edges)
    result: list[TransactionId] = []
    for t in order:
        if t in blocked:
            break
        result.append(t)
    if tuple(result[: len(prior)]) != prior:
        raise InternalFault(
            f"output {result!r} does not extend prior output {list(prior)!r}"
        )
    return tuple(result)


@dataclass
class PreliminaryStep:
    graph: StreamedOrderingGraph
    decisions: DecisionMap
    output: tuple[TransactionId, ...]


def stream_step_preliminary(
    votes: VoteSet,
    tiebreak: TiebreakKey = lexicographic_tiebreak,
    *,
    rounding: int | None = None,
    prior: Sequence[TransactionId] = (),
) -> PreliminaryStep:
    """One fixed-tiebreak streaming pass over the current votes.

    Single descending-weight sweep; each edge is decided exactly once, and
    indeterminate edges immediately join the graph used by later searches.
    """
    graph = build_streamed_graph(votes)
    if rounding is not None:
        graph = round_graph(graph, rounding)
    dm = DecisionMap()
    _init_future_edges(dm, graph)
    for _, class_edges in _weight_classes(graph):
        for edge in sorted(class_edges, key=tiebreak):
            status, _ = _evaluate(dm, graph, edge)
            dm.add(edge, status)
    output = emit_prefix(dm, graph, prior)
    return PreliminaryStep(graph, dm, output)


@dataclass(frozen=True)
class LedgerEntry:
    src: TransactionId
    dst: TransactionId
    status: Status  # ACCEPTED or REJECTED only
    weight: Fraction
    seq: int  # materialized position within the weight class

    @property
    def edge(self) -> Edge:
        return (self.src, self.dst)


class DecisionLedger:
    """Final decisions and the implied within-class tiebreak across invocations.

    Entries incident to emitted transactions may be pruned: monotonicity pins
    their decisions, so they are reconstructed from the output log instead.
    """

    def __init__(self) -> None:
        self.entries: list[LedgerEntry] = []
        self.emitted: list[TransactionId] = []
        self._by_edge: dict[Edge, LedgerEntry] = {}

    def decision(self, edge: Edge) -> LedgerEntry | None:
        return self._by_edge.get(edge)

    def for_class(self, weight: Fraction) -> list[LedgerEntry]:
        found = [e for e in self.entries if e.weight == weight]
        found.sort(key=lambda e: e.seq)
        return found

    def record(self, edge: Edge, status: Status, weight: Fraction) -> LedgerEntry:
        if status is Status.INDETERMINATE:
            raise ValueError("only final decisions enter the ledger")
        seqs = [e.seq for e in self.entries if e.weight == weight]
        entry = LedgerEntry(edge[0], edge[1], status, weight, max(seqs, default=-1) + 1)
        self.entries.append(entry)
        self._by_edge[edge] = entry
        return entry

    def load(self, entries: Iterable[LedgerEntry], emitted: Iterable[TransactionId]):
        self.entries = list(entries)
        self.emitted = list(emitted)
        self._by_edge = {e.edge: e for e in self.entries}

    def prune(self, emitted: Iterable[TransactionId]) -> None:
        emitted = set(emitted)
        kept = [e for e in self.entries if e.src not in emitted and e.dst not in emitted]
        self.entries = kept
        self._by_edge = {e.edge: e for e in kept}


def _implied_decision(
    edge: Edge, emitted_pos: Mapping[TransactionId, int]
) -> Status | None:
    """Decision pinned by monotonicity for edges touching emitted transactions.

    Edges out of an emitted transaction are accepted (toward a later-emitted
    one only if the log agrees); edges into an emitted transaction from an
    unemitted one are rejected.
    """
    src, dst = edge
    s, d = emitted_pos.get(src), emitted_pos.get(dst)
    if s is None and d is None:
        return None
    if s is not None and d is not None:
        return Status.ACCEPTED if s < d else Status.REJECTED
    return Status.ACCEPTED if s is not None else Status.REJECTED


class StreamState:
    """Single-writer state threaded through successive live invocations."""

    def __init__(self, *, rounding: int | None = None, prune: bool = True):
        if rounding is not None and rounding < 1:
            raise ValueError("rounding denominator must be >= 1")
        self.ledger = DecisionLedger()
        self.rounding = rounding
        self.prune = prune
        self.last_votes: VoteSet | None = None

    @property
    def output(self) -> tuple[TransactionId, ...]:
        return tuple(self.ledger.emitted)

    @property
    def last_input_sizes(self) -> tuple[int, ...] | None:
        if self.last_votes is None:
            return None
        return tuple(len(v.sequence) for v in self.last_votes.votes)


@dataclass
class LiveStep:
    graph: StreamedOrderingGraph
    decisions: DecisionMap
    newly_emitted: tuple[TransactionId, ...]
    output: tuple[TransactionId, ...]
    # Last blocking path recorded for every surviving indeterminate edge.
    witness_paths: dict[Edge, tuple[TransactionId, ...]] = field(default_factory=dict)


def stream_step_live(state: StreamState, votes: VoteSet) -> LiveStep:
    """One invocation of the deferring (asymptotically live) variant.

    Within each weight class: adopt decisions already pinned by the output
    log, replay ledger entries in their materialized order, then work a FIFO
    queue of new edges, pushing any edge that would come out indeterminate to
    the back.  The class ends once a full pass produces no new final
    decision; survivors become indeterminate.
    """
    if state.last_votes is not None:
        check_extension(state.last_votes, votes)
    graph = build_streamed_graph(votes)
    if state.rounding is not None:
        graph = round_graph(graph, state.rounding)

    dm = DecisionMap()
    _init_future_edges(dm, graph)
    witness_paths: dict[Edge, tuple[TransactionId, ...]] = {}
    emitted_pos = {t: i for i, t in enumerate(state.ledger.emitted)}

    for weight, class_edges in _weight_classes(graph):
        recorded = [
            e for e in state.ledger.for_class(weight) if e.edge in set(class_edges)
        ]
        recorded_edges = {e.edge for e in recorded}
        implied: list[Edge] = []
        fresh: list[Edge] = []
        for edge in class_edges:
            if edge in recorded_edges:
                continue
            if _implied_decision(edge, emitted_pos) is not None:
                implied.append(edge)
            else:
                fresh.append(edge)

        for edge in sorted(implied):
            dm.add(edge, _implied_decision(edge, emitted_pos))

        for entry in recorded:
            status, _ = _evaluate(dm, graph, entry.edge)
            if status is not Status.INDETERMINATE and status is not entry.status:
                raise InternalFault(
                    f"ledger says {entry.status} for {entry.edge} "
                    f"but evaluation now yields {status}"
                )
            dm.add(entry.edge, entry.status)

        queue = deque(sorted(fresh))
        last_paths: dict[Edge, tuple[TransactionId, ...]] = {}
        attempts_since_final = 0
        while queue:
            if attempts_since_final >= len(queue):
                break
            edge = queue.popleft()
            status, path = _evaluate(dm, graph, edge)
            if status is Status.INDETERMINATE:
                queue.append(edge)
                last_paths[edge] = path
                attempts_since_final += 1
            else:
                dm.add(edge, status)
                state.ledger.record(edge, status, weight)
                attempts_since_final = 0
        for edge in queue:
            dm.add(edge, Status.INDETERMINATE)
            witness_paths[edge] = last_paths[edge]

    output = emit_prefix(dm, graph, state.ledger.emitted)
    newly = output[len(state.ledger.emitted) :]
    state.ledger.emitted.extend(newly)
    if state.prune:
        state.ledger.prune(state.ledger.emitted)
    state.last_votes = votes
    return LiveStep(graph, dm, newly, output, witness_paths)


def indeterminacy_witness(step: LiveStep, edge: Edge) -> list[Edge]:
    """Chain of indeterminate edges of strictly increasing weight up to the
    future vertex, each contemporary to (inside the locality set of) the
    previous one, explaining why ``edge`` stayed indeterminate."""
    if step.decisions.status.get(edge) is not Status.INDETERMINATE:
        raise ValueError(f"{edge} was not marked indeterminate")
    if edge[0] == FUTURE:
        return [edge]

    def edge_weight(e: Edge) -> Fraction:
        if FUTURE in e:
            return Fraction(1)
        return step.graph.weights[e]

    chain = [edge]
    current = edge
    while current[0] != FUTURE:
        path = step.witness_paths.get(current)
        if path is None:
            raise InternalFault(f"no recorded blocking path for {current}")
        indet = [
            pe
            for pe in _path_edges(path)
            if step.decisions.status.get(pe) is Status.INDETERMINATE
        ]
        from_future = [pe for pe in indet if pe[0] == FUTURE]
        candidates = from_future or [
            pe for pe in indet if edge_weight(pe) > edge_weight(current)
        ]
        if not candidates:
            raise InternalFault(f"blocking path for {current} has no heavier link")
        nxt = candidates[0]
        chain.append(nxt)
        current = nxt
    return chain


def materialized_edge_order(
    ledger: DecisionLedger,
    weights: Mapping[Edge, Fraction],
    emitted: Sequence[TransactionId],
) -> list[Edge]:
    """The total edge order implied by a live run, for replay through the
    non-streaming algorithm: descending weight; within a class, decisions
    pinned by the output log, then ledger entries in materialized order, then
    everything else lexicographically."""
    emitted_set = set(emitted)
    by_weight: dict[Fraction, list[Edge]] = defaultdict(list)
    for edge, w in weights.items():
        if w > 0:
            by_weight[w].append(edge)
    order: list[Edge] = []
    for weight in sorted(by_weight, reverse=True):
        class_edges = set(by_weight[weight])
        recorded = [e.edge for e in ledger.for_class(weight) if e.edge in class_edges]
        recorded_set = set(recorded)
        implied = sorted(
            e
            for e in class_edges
            if e not in recorded_set and (e[0] in emitted_set or e[1] in emitted_set)
        )
        rest = sorted(
            e
            for e in class_edges
            if e not in recorded_set and e[0] not in emitted_set and e[1] not in emitted_set
        )
        order.extend(implied)
        order.extend(recorded)
        order.extend(rest)
    return order
