"""Vote sets, the weighted ordering graph, and the reference Ranked Pairs order.

Everything here operates on complete information: every replica has voted on
every transaction.  The streaming engine (:mod:`streamrp.streaming`) uses these
functions as its correctness oracle.

Edge weights are exact rationals.  Equal-weight classes drive control flow in
Ranked Pairs, so floating point would silently change results.
"""

from __future__ import annotations

import hashlib
import heapq
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

TransactionId = str
Edge = tuple[TransactionId, TransactionId]


class VoteError(ValueError):
    """Malformed vote input."""


class IncompleteVoteError(VoteError):
    """A vote omits a transaction required by the operation."""

    def __init__(self, replica: int, missing: TransactionId):
        self.replica = replica
        self.missing = missing
        super().__init__(f"vote of replica {replica} omits transaction {missing!r}")


def txid_digest(txid: TransactionId) -> int:
    """Stable 64-bit digest of a transaction id.

    Deterministic across runs and platforms, unlike the interpreter's salted
    ``hash``.  Used wherever ties must be broken "by hash".
    """
    raw = hashlib.blake2b(txid.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(raw, "big")


@dataclass(frozen=True)
class OrderingVote:
    """One replica's reported order over the transactions it has seen."""

    replica: int
    sequence: tuple[TransactionId, ...]

    def __post_init__(self) -> None:
        if len(set(self.sequence)) != len(self.sequence):
            dupes = [t for t in self.sequence if self.sequence.count(t) > 1]
            raise VoteError(
                f"vote of replica {self.replica} repeats transaction {dupes[0]!r}"
            )

    def positions(self) -> dict[TransactionId, int]:
        return {t: i for i, t in enumerate(self.sequence)}

    def restricted(self, keep: Iterable[TransactionId]) -> "OrderingVote":
        keep = set(keep)
        return OrderingVote(self.replica, tuple(t for t in self.sequence if t in keep))

    def extends(self, earlier: "OrderingVote") -> bool:
        return self.sequence[: len(earlier.sequence)] == earlier.sequence


@dataclass(frozen=True)
class VoteSet:
    """One ordering vote per replica, indexed 0..n-1.

    Votes may be partial (unequal lengths); operations that need complete
    votes check completeness themselves.
    """

    votes: tuple[OrderingVote, ...]

    def __post_init__(self) -> None:
        for i, vote in enumerate(self.votes):
            if vote.replica != i:
                raise VoteError(
                    f"votes must be indexed 0..n-1 in order; "
                    f"position {i} holds replica {vote.replica}"
                )

    @staticmethod
    def from_sequences(sequences: Iterable[Sequence[TransactionId]]) -> "VoteSet":
        return VoteSet(
            tuple(OrderingVote(i, tuple(seq)) for i, seq in enumerate(sequences))
        )

    @property
    def n(self) -> int:
        return len(self.votes)

    def sequences(self) -> tuple[tuple[TransactionId, ...], ...]:
        return tuple(v.sequence for v in self.votes)

    def transactions(self) -> frozenset[TransactionId]:
        return frozenset(t for v in self.votes for t in v.sequence)

    def is_complete(self) -> bool:
        universe = self.transactions()
        return all(len(v.sequence) == len(universe) for v in self.votes)

    def require_complete(self) -> None:
        universe = self.transactions()
        for vote in self.votes:
            seen = set(vote.sequence)
            for t in sorted(universe):
                if t not in seen:
                    raise IncompleteVoteError(vote.replica, t)

    def extends(self, earlier: "VoteSet") -> bool:
        if self.n != earlier.n:
            return False
        return all(v.extends(e) for v, e in zip(self.votes, earlier.votes))


def restrict_votes(votes: VoteSet, keep: Iterable[TransactionId]) -> VoteSet:
    """Filter every vote down to ``keep``, preserving relative order."""
    keep = frozenset(keep)
    unknown = keep - votes.transactions()
    if unknown:
        raise VoteError(f"cannot keep unknown transactions: {sorted(unknown)}")
    return VoteSet(tuple(v.restricted(keep) for v in votes.votes))


@dataclass(frozen=True)
class Neighborhoods:
    """Partition of the other vertices relative to one transaction.

    ``preceding`` holds unanimous predecessors (weight-1 edges into the
    transaction), ``subsequent`` unanimous successors, ``concurrent`` the rest.
    """

    preceding: frozenset[TransactionId]
    concurrent: frozenset[TransactionId]
    subsequent: frozenset[TransactionId]


class OrderingGraph:
    """Complete weighted digraph over transactions voted on by every replica.

    ``weight(a, b)`` is the fraction of replicas reporting ``a`` before ``b``;
    complementary directions always sum to 1.
    """

    def __init__(
        self,
        n: int,
        vertices: Iterable[TransactionId],
        weights: Mapping[Edge, Fraction],
    ):
        self.n = n
        self.vertices = frozenset(vertices)
        self._weights = dict(weights)

    def weight(self, a: TransactionId, b: TransactionId) -> Fraction:
        try:
            return self._weights[(a, b)]
        except KeyError:
            raise VoteError(f"unknown transaction pair ({a!r}, {b!r})") from None

    def edges(self) -> Iterable[tuple[Edge, Fraction]]:
        return self._weights.items()

    def neighborhoods(self, t: TransactionId) -> Neighborhoods:
        if t not in self.vertices:
            raise VoteError(f"unknown transaction {t!r}")
        pre, conc, sub = set(), set(), set()
        for other in self.vertices:
            if other == t:
                continue
            w = self.weight(other, t)
            if w == 1:
                pre.add(other)
            elif w == 0:
                sub.add(other)
            else:
                conc.add(other)
        return Neighborhoods(frozenset(pre), frozenset(conc), frozenset(sub))


def pairwise_weights(
    sequences: Sequence[Sequence[TransactionId]],
    vertices: Iterable[TransactionId],
    n: int,
) -> dict[Edge, Fraction]:
    """Weights over all ordered pairs of ``vertices`` from per-replica orders."""
    verts = sorted(vertices)
    counts: dict[Edge, int] = {}
    for a in verts:
        for b in verts:
            if a != b:
                counts[(a, b)] = 0
    for seq in sequences:
        pos = {t: i for i, t in enumerate(seq)}
        for a in verts:
            for b in verts:
                if a != b and pos[a] < pos[b]:
                    counts[(a, b)] += 1
    return {e: Fraction(c, n) for e, c in counts.items()}


def build_ordering_graph(votes: VoteSet) -> OrderingGraph:
    """Compute the ordering graph; every vote must cover every transaction."""
    votes.require_complete()
    universe = votes.transactions()
    weights = pairwise_weights(votes.sequences(), universe, votes.n)
    return OrderingGraph(votes.n, universe, weights)


def neighborhoods(graph: OrderingGraph, t: TransactionId) -> Neighborhoods:
    return graph.neighborhoods(t)


def edge_iteration_order(graph: OrderingGraph) -> list[Edge]:
    """Edges sorted by weight descending, ties by (source, target) ascending.

    Weight-0 edges are omitted: their reversals have weight 1 and are always
    accepted first, so a 0-weight edge is always rejected.
    """
    positive = [(e, w) for e, w in graph.edges() if w > 0]
    positive.sort(key=lambda ew: (-ew[1], ew[0]))
    return [e for e, _ in positive]


TiebreakKey = Callable[[Edge], object]


def lexicographic_tiebreak(edge: Edge) -> object:
    return edge


def order_edges(
    weights: Mapping[Edge, Fraction], tiebreak: TiebreakKey = lexicographic_tiebreak
) -> list[Edge]:
    """Positive-weight edges, weight descending, ``tiebreak`` within a class."""
    positive = [(e, w) for e, w in weights.items() if w > 0]
    positive.sort(key=lambda ew: (-ew[1], tiebreak(ew[0])))
    return [e for e, _ in positive]


@dataclass(frozen=True)
class RejectedEdge:
    edge: Edge
    weight: Fraction
    # Accepted path from the edge's target back to its source; its minimum
    # weight is at least ``weight``.
    witness: tuple[TransactionId, ...]


@dataclass
class RankedPairsRun:
    """Full record of one Ranked Pairs execution."""

    order: tuple[TransactionId, ...]
    accepted: dict[Edge, Fraction] = field(default_factory=dict)
    rejections: list[RejectedEdge] = field(default_factory=list)


def _bfs_path(
    adjacency: Mapping[TransactionId, set[TransactionId]],
    start: TransactionId,
    goal: TransactionId,
) -> tuple[TransactionId, ...] | None:
    """Shortest directed path start..goal, deterministic neighbor order."""
    if start == goal:
        return (start,)
    parent: dict[TransactionId, TransactionId] = {start: start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in sorted(adjacency.get(node, ())):
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


def topological_order(
    vertices: Iterable[TransactionId], edges: Iterable[Edge]
) -> tuple[TransactionId, ...]:
    """Kahn's algorithm; ties among available vertices break by id."""
    verts = set(vertices)
    out: dict[TransactionId, set[TransactionId]] = {v: set() for v in verts}
    indeg: dict[TransactionId, int] = {v: 0 for v in verts}
    for a, b in edges:
        if b not in out[a]:
            out[a].add(b)
            indeg[b] += 1
    ready = [v for v in verts if indeg[v] == 0]
    heapq.heapify(ready)
    result: list[TransactionId] = []
    while ready:
        v = heapq.heappop(ready)
        result.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    if len(result) != len(verts):
        raise AssertionError("cycle in supposedly acyclic accepted edges")
    return tuple(result)


def run_ranked_pairs(
    graph: OrderingGraph, edge_order: Sequence[Edge] | None = None
) -> RankedPairsRun:
    """Greedy acyclic edge selection over ``edge_order``, then topological sort.

    Records, for every rejected edge, the already-accepted reverse path that
    forced the rejection.
    """
    if edge_order is None:
        edge_order = edge_iteration_order(graph)
    adjacency: dict[TransactionId, set[TransactionId]] = {
        v: set() for v in graph.vertices
    }
    run = RankedPairsRun(order=())
    for a, b in edge_order:
        w = graph.weight(a, b)
        witness = _bfs_path(adjacency, b, a)
        if witness is None:
            adjacency[a].add(b)
            run.accepted[(a, b)] = w
        else:
            run.rejections.append(RejectedEdge((a, b), w, witness))
    run.order = topological_order(graph.vertices, run.accepted)
    return run


def ranked_pairs(
    votes: VoteSet, tiebreak: TiebreakKey = lexicographic_tiebreak
) -> tuple[TransactionId, ...]:
    """The Ranked Pairs order for a complete vote set.

    The empty vote set yields the empty order.  ``tiebreak`` orders edges of
    equal weight; the default is ascending (source, target).
    """
    if not votes.transactions():
        return ()
    graph = build_ordering_graph(votes)
    order = order_edges(dict(graph.edges()), tiebreak)
    return run_ranked_pairs(graph, order).order
