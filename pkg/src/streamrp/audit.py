"""Fairness auditors: verify protocol output against ground-truth receipts.

An output ordering is fair at (gamma, delta) when every pair received in one
order by at least gamma*n replicas but emitted reversed is justified by a
path of links, each received by at least (gamma - 2*delta)*n replicas and each
following the output order.  Audits always count the true receipt orders,
including those of faulty replicas; delta absorbs what faulty reports could
have distorted.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from typing import Iterable, Mapping, Sequence

from .core import TransactionId, VoteError, VoteSet

Pair = tuple[TransactionId, TransactionId]


@dataclass(frozen=True)
class ReceiptProfile:
    """Ground truth for an audit.

    ``received`` holds each replica's true total receipt order over every
    transaction under audit; ``reported`` is what was actually fed to the
    ordering algorithm.  Honest replicas report prefixes of what they
    received.
    """

    received: tuple[tuple[TransactionId, ...], ...]
    faulty: frozenset[int] = frozenset()
    reported: VoteSet | None = None

    @property
    def n(self) -> int:
        return len(self.received)

    def transactions(self) -> frozenset[TransactionId]:
        return frozenset(t for order in self.received for t in order)

    def receipt_counts(self) -> dict[Pair, int]:
        counts: dict[Pair, int] = {}
        txs = sorted(self.transactions())
        for a in txs:
            for b in txs:
                if a != b:
                    counts[(a, b)] = 0
        for order in self.received:
            pos = {t: i for i, t in enumerate(order)}
            for a in txs:
                for b in txs:
                    if a != b and pos[a] < pos[b]:
                        counts[(a, b)] += 1
        return counts


@dataclass(frozen=True)
class PathWitness:
    """A justifying path for one reversed strong pair."""

    pair: Pair
    path: tuple[TransactionId, ...]
    link_counts: tuple[int, ...]


@dataclass(frozen=True)
class FairnessVerdict:
    gamma: Fraction
    delta: Fraction
    violation: tuple[Pair, str] | None
    witnesses: tuple[PathWitness, ...] = ()

    @property
    def passed(self) -> bool:
        return self.violation is None

    @property
    def witness(self) -> PathWitness | None:
        return self.witnesses[0] if self.witnesses else None


@dataclass(frozen=True)
class BatchDecomposition:
    """Strongly connected components of the thresholded receipt graph, in an
    order consistent with the surviving inter-component edges."""

    batches: tuple[frozenset[TransactionId], ...]


def _check_output(profile: ReceiptProfile, output: Sequence[TransactionId]) -> None:
    unknown = set(output) - profile.transactions()
    if unknown:
        raise VoteError(f"output contains unknown transactions: {sorted(unknown)}")
    if len(set(output)) != len(output):
        raise VoteError("output repeats a transaction")


def audit_pairwise_fairness(
    profile: ReceiptProfile,
    output: Sequence[TransactionId],
    gamma: Fraction,
    delta: Fraction,
) -> FairnessVerdict:
    """Check every reversed gamma-strong pair for a justifying path.

    Paths run through output transactions only, follow the output order, and
    every link needs at least (gamma - 2*delta)*n true receipts.  The search
    is exhaustive reachability, so a violation verdict means no qualifying
    path exists.
    """
    gamma = Fraction(gamma)
    delta = Fraction(delta)
    _check_output(profile, output)
    n = profile.n
    counts = profile.receipt_counts()
    pos = {t: i for i, t in enumerate(output)}
    strong_needed = gamma * n
    link_needed = (gamma - 2 * delta) * n

    links: dict[TransactionId, list[TransactionId]] = {t: [] for t in output}
    for x in output:
        for y in output:
            if x != y and pos[x] < pos[y] and counts[(x, y)] >= link_needed:
                links[x].append(y)
    for x in links:
        links[x].sort()

    witnesses: list[PathWitness] = []
    for a in sorted(output):
        for b in sorted(output):
            if a == b:
                continue
            if counts[(a, b)] >= strong_needed and pos[b] < pos[a]:
                path = _reach(links, b, a)
                if path is None:
                    note = (
                        f"{counts[(a, b)]}/{n} replicas received {a} before {b} "
                        f"but the output reverses them with no justifying path"
                    )
                    return FairnessVerdict(gamma, delta, ((a, b), note))
                link_counts = tuple(
                    counts[(path[i], path[i + 1])] for i in range(len(path) - 1)
                )
                witnesses.append(PathWitness((a, b), path, link_counts))
    return FairnessVerdict(gamma, delta, None, tuple(witnesses))


def _reach(
    links: Mapping[TransactionId, Sequence[TransactionId]],
    start: TransactionId,
    goal: TransactionId,
) -> tuple[TransactionId, ...] | None:
    parent = {start: start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in links[node]:
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


def gamma_grid(n: int) -> list[Fraction]:
    """All meaningful thresholds: multiples of 1/n in (1/2, 1]."""
    return [Fraction(i, n) for i in range(n // 2 + 1, n + 1) if Fraction(i, n) > Fraction(1, 2)]


def audit_all_gamma(
    profile: ReceiptProfile,
    output: Sequence[TransactionId],
    delta: Fraction,
) -> list[FairnessVerdict]:
    return [
        audit_pairwise_fairness(profile, output, g, delta) for g in gamma_grid(profile.n)
    ]


def audit_exact_minimality(
    profile: ReceiptProfile,
    output: Sequence[TransactionId],
    gamma: Fraction,
) -> FairnessVerdict:
    """The delta = 0 specialization: witness links need gamma*n receipts."""
    return audit_pairwise_fairness(profile, output, gamma, Fraction(0))


def _tarjan_scc(
    vertices: Sequence[TransactionId],
    out: Mapping[TransactionId, Sequence[TransactionId]],
) -> list[frozenset[TransactionId]]:
    """Iterative Tarjan; deterministic for sorted vertex/neighbor order."""
    index: dict[TransactionId, int] = {}
    low: dict[TransactionId, int] = {}
    on_stack: set[TransactionId] = set()
    stack: list[TransactionId] = []
    components: list[frozenset[TransactionId]] = []
    counter = 0
    for root in vertices:
        if root in index:
            continue
        work: list[tuple[TransactionId, int]] = [(root, 0)]
        while work:
            node, child_i = work[-1]
            if child_i == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            children = out.get(node, ())
            for i in range(child_i, len(children)):
                child = children[i]
                if child not in index:
                    work[-1] = (node, i + 1)
                    work.append((child, 0))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if low[node] == index[node]:
                comp = set()
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp.add(member)
                    if member == node:
                        break
                components.append(frozenset(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return components


def _condensation_order(
    vertices: Sequence[TransactionId],
    edges: Iterable[Pair],
) -> tuple[frozenset[TransactionId], ...]:
    out: dict[TransactionId, list[TransactionId]] = {v: [] for v in vertices}
    for a, b in edges:
        out[a].append(b)
    for v in out:
        out[v] = sorted(set(out[v]))
    comps = _tarjan_scc(sorted(vertices), out)
    comp_of = {v: i for i, comp in enumerate(comps) for v in comp}
    indeg = [0] * len(comps)
    succ: list[set[int]] = [set() for _ in comps]
    for a in vertices:
        for b in out[a]:
            ca, cb = comp_of[a], comp_of[b]
            if ca != cb and cb not in succ[ca]:
                succ[ca].add(cb)
                indeg[cb] += 1
    ready = [(min(comps[i]), i) for i in range(len(comps)) if indeg[i] == 0]
    heapq.heapify(ready)
    ordered: list[frozenset[TransactionId]] = []
    while ready:
        _, i = heapq.heappop(ready)
        ordered.append(comps[i])
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, (min(comps[j]), j))
    return tuple(ordered)


def batch_decomposition(
    profile: ReceiptProfile, gamma: Fraction, delta: Fraction
) -> BatchDecomposition:
    """Drop receipt edges below (gamma - delta)*n and condense what remains."""
    gamma = Fraction(gamma)
    delta = Fraction(delta)
    counts = profile.receipt_counts()
    threshold = (gamma - delta) * profile.n
    vertices = sorted(profile.transactions())
    kept = [e for e, c in counts.items() if c >= threshold]
    return BatchDecomposition(_condensation_order(vertices, kept))


def _order_respects_dependencies(
    order: Sequence[TransactionId], edges: Sequence[Pair]
) -> bool:
    """True when every dependency edge the order reverses is justified by an
    order-increasing path of dependency edges."""
    pos = {v: i for i, v in enumerate(order)}
    adj: dict[TransactionId, list[TransactionId]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)

    def increasing_reach(src: TransactionId, dst: TransactionId) -> bool:
        seen = {src}
        stack = [src]
        while stack:
            u = stack.pop()
            if u == dst:
                return True
            for v in adj.get(u, ()):
                if v not in seen and pos[v] > pos[u]:
                    seen.add(v)
                    stack.append(v)
        return False

    return all(
        pos[b] > pos[a] or increasing_reach(b, a) for a, b in edges
    )


def _batch_walk_order(
    members: frozenset[TransactionId], edges: Sequence[Pair]
) -> tuple[TransactionId, ...]:
    """Within-batch order whose reversed dependency edges all carry
    order-increasing justification paths.

    Plain id order does not guarantee this (a dependency cycle can be cut so
    that no path follows the output), so fall back to a depth-first walk of
    the cycle structure and finally to the first valid permutation.  Small
    exhaustive searches show a valid order always exists for the strongly
    connected dependency graphs batches are made of.
    """
    inner = [(a, b) for a, b in edges if a in members and b in members]
    by_id = tuple(sorted(members))
    if _order_respects_dependencies(by_id, inner):
        return by_id
    adj: dict[TransactionId, list[TransactionId]] = {}
    for a, b in inner:
        adj.setdefault(a, []).append(b)
    for v in adj:
        adj[v].sort()
    visit_order: list[TransactionId] = []
    seen: set[TransactionId] = set()
    stack = [min(members)]
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        visit_order.append(u)
        stack.extend(reversed(adj.get(u, [])))
    visit_order.extend(t for t in by_id if t not in seen)
    if _order_respects_dependencies(visit_order, inner):
        return tuple(visit_order)
    for perm in permutations(by_id):
        if _order_respects_dependencies(perm, inner):
            return perm
    return by_id  # unreachable for strongly connected batches


def aequitas_baseline(
    votes: VoteSet, gamma: Fraction, f: int
) -> tuple[tuple[TransactionId, ...], ...]:
    """Fixed-threshold batching in the style of Aequitas.

    A dependency edge needs at least gamma*n - f reported receipts; batches
    are the condensation components, ordered consistently with surviving
    dependencies.  Within a batch the order walks the dependency cycles so
    that every reversed dependency keeps an output-consistent justification;
    id order is used whenever it already does.
    """
    gamma = Fraction(gamma)
    n = votes.n
    if not (gamma - Fraction(1, 2) > Fraction(2 * f, n)):
        raise ValueError(
            f"requires gamma - 1/2 > 2f/n, got gamma={gamma}, f={f}, n={n}"
        )
    votes.require_complete()
    profile = ReceiptProfile(received=votes.sequences())
    counts = profile.receipt_counts()
    threshold = gamma * n - f
    vertices = sorted(votes.transactions())
    kept = [e for e, c in counts.items() if c >= threshold]
    batches = _condensation_order(vertices, kept)
    return tuple(_batch_walk_order(batch, kept) for batch in batches)


def flatten_batches(
    batches: Iterable[Iterable[TransactionId]],
) -> tuple[TransactionId, ...]:
    return tuple(t for batch in batches for t in batch)
