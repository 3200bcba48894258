import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamrp import (
    IncompleteVoteError,
    VoteError,
    VoteSet,
    build_ordering_graph,
    edge_iteration_order,
    ranked_pairs,
    restrict_votes,
    run_ranked_pairs,
    txid_digest,
)
from streamrp.core import OrderingVote, order_edges

from instances import (
    INTERLEAVED_EXPECTED_ORDER,
    dominant_edge_cycle_votes,
    interleaved_cycles_votes,
    majority_split_votes,
)


def votes_of(*seqs):
    return VoteSet.from_sequences(seqs)


# ---------------------------------------------------------------- vote types


def test_vote_rejects_duplicates():
    with pytest.raises(VoteError, match="repeats"):
        OrderingVote(0, ("a", "b", "a"))


def test_voteset_requires_contiguous_indices():
    with pytest.raises(VoteError):
        VoteSet((OrderingVote(1, ("a",)),))


def test_digest_is_stable_and_64bit():
    d = txid_digest("tx_hello")
    assert d == txid_digest("tx_hello")
    assert 0 <= d < 2**64
    assert txid_digest("tx_hello") != txid_digest("tx_hellp")


# ------------------------------------------------------------- graph builds


def test_single_replica_graph():
    g = build_ordering_graph(votes_of(("a", "b")))
    assert g.weight("a", "b") == 1
    assert g.weight("b", "a") == 0


def test_majority_split_weights():
    g = build_ordering_graph(majority_split_votes())
    assert g.weight("tx_b", "tx_a") == Fraction(6, 10)
    assert g.weight("tx_a", "tx_b") == Fraction(4, 10)


def test_dominant_edge_cycle_weights():
    g = build_ordering_graph(dominant_edge_cycle_votes())
    assert g.weight("t1", "t2") == Fraction(8, 10)
    assert g.weight("t2", "t3") == Fraction(6, 10)
    assert g.weight("t3", "t1") == Fraction(6, 10)


def test_incomplete_votes_name_the_replica():
    votes = votes_of(("a", "b", "c"), ("a", "b"))
    with pytest.raises(IncompleteVoteError) as exc:
        build_ordering_graph(votes)
    assert exc.value.replica == 1
    assert exc.value.missing == "c"


# ------------------------------------------------------------ neighborhoods


def test_neighborhoods_single_replica():
    g = build_ordering_graph(votes_of(("a", "b", "c")))
    nb = g.neighborhoods("b")
    assert nb.preceding == {"a"}
    assert nb.concurrent == set()
    assert nb.subsequent == {"c"}


def test_neighborhoods_majority_split():
    g = build_ordering_graph(majority_split_votes())
    nb = g.neighborhoods("tx_a")
    # 6/10 sits strictly between 0 and 1, so the pair is concurrent
    assert nb.preceding == set()
    assert nb.concurrent == {"tx_b"}
    assert nb.subsequent == set()


def test_neighborhoods_swap_pattern_truncation():
    # two replicas, both covering t1..t4: (t2,t1,t4,t3) and (t1,t3,t2,t4)
    g = build_ordering_graph(votes_of(("t2", "t1", "t4", "t3"), ("t1", "t3", "t2", "t4")))
    nb = g.neighborhoods("t2")
    assert nb.concurrent == {"t1", "t3"}
    assert nb.preceding == set()
    assert nb.subsequent == {"t4"}


def test_neighborhoods_unknown_transaction():
    g = build_ordering_graph(votes_of(("a", "b")))
    with pytest.raises(VoteError):
        g.neighborhoods("zz")


# ------------------------------------------------------- edge iteration order


def test_edge_order_distinct_weights_descending():
    g = build_ordering_graph(votes_of(("a", "b", "c")))
    order = edge_iteration_order(g)
    weights = [g.weight(*e) for e in order]
    assert weights == sorted(weights, reverse=True)
    assert all(w > 0 for w in weights)


def test_edge_order_dominant_cycle_exact():
    g = build_ordering_graph(dominant_edge_cycle_votes())
    assert edge_iteration_order(g) == [
        ("t1", "t2"),  # 8/10
        ("t2", "t3"),  # 6/10, lexicographic before (t3, t1)
        ("t3", "t1"),
        ("t1", "t3"),  # 4/10 reversals
        ("t3", "t2"),
        ("t2", "t1"),  # 2/10
    ]


def test_edge_order_tie_breaks_by_target():
    # two 5/10 edges out of the same source: (a,b) and (a,c) tie on weight
    seqs = [("a", "b", "c")] * 5 + [("b", "c", "a")] * 5
    g = build_ordering_graph(VoteSet.from_sequences(seqs))
    order = edge_iteration_order(g)
    pos = {e: i for i, e in enumerate(order)}
    assert g.weight("a", "b") == g.weight("a", "c") == Fraction(1, 2)
    assert pos[("a", "b")] < pos[("a", "c")]


# ----------------------------------------------------------------- the order


def test_unanimous_votes_reproduce_the_order():
    votes = votes_of(("a", "b", "c"), ("a", "b", "c"), ("a", "b", "c"))
    assert ranked_pairs(votes) == ("a", "b", "c")


def test_interleaved_instance_order():
    order = ranked_pairs(interleaved_cycles_votes())
    assert order == INTERLEAVED_EXPECTED_ORDER
    pos = {t: i for i, t in enumerate(order)}
    assert pos["t5"] < pos["t1"] < pos["t4"] < pos["t8"]


def test_interleaved_weight_classes():
    g = build_ordering_graph(interleaved_cycles_votes())
    def w(a, b):
        return g.weight(f"t{a}", f"t{b}")
    for a, b in [(1, 2), (2, 3), (3, 4), (5, 6), (6, 7), (7, 8)]:
        assert w(a, b) == Fraction(12, 16)
    assert w(4, 1) == w(8, 5) == Fraction(11, 16)
    assert w(5, 1) == w(4, 8) == Fraction(9, 16)


def test_dominant_cycle_order():
    assert ranked_pairs(dominant_edge_cycle_votes()) == ("t1", "t2", "t3")


def test_empty_voteset_gives_empty_order():
    assert ranked_pairs(votes_of((), ())) == ()


def test_ranked_pairs_requires_complete_votes():
    with pytest.raises(IncompleteVoteError):
        ranked_pairs(votes_of(("a", "b"), ("a",)))


# ------------------------------------------------------------ restrict votes


def test_restrict_to_everything_is_identity():
    votes = dominant_edge_cycle_votes()
    assert restrict_votes(votes, votes.transactions()) == votes


def test_restrict_preserves_relative_order():
    votes = votes_of(("a", "b", "c", "d"))
    assert restrict_votes(votes, {"b", "d"}).votes[0].sequence == ("b", "d")


def test_restrict_interleaved_prefix_reproduces_it():
    votes = interleaved_cycles_votes()
    order = ranked_pairs(votes)
    head = order[:2]
    again = ranked_pairs(restrict_votes(votes, set(head)))
    assert again == head


# ------------------------------------------------------------------ properties


@st.composite
def complete_votesets(draw, max_n=6, max_m=6):
    m = draw(st.integers(2, max_m))
    n = draw(st.integers(1, max_n))
    txs = [f"x{j}" for j in range(m)]
    seqs = [tuple(draw(st.permutations(txs))) for _ in range(n)]
    return VoteSet.from_sequences(seqs)


@settings(max_examples=60, deadline=None)
@given(complete_votesets())
def test_weight_complement(votes):
    g = build_ordering_graph(votes)
    for a in g.vertices:
        for b in g.vertices:
            if a != b:
                assert g.weight(a, b) + g.weight(b, a) == 1


@settings(max_examples=60, deadline=None)
@given(complete_votesets())
def test_weight_one_subgraph_is_acyclic(votes):
    # total-order votes cannot produce a cycle of unanimous edges
    g = build_ordering_graph(votes)
    edges = {(a, b) for (a, b), w in g.edges() if w == 1}
    from streamrp.core import topological_order

    topological_order(g.vertices, edges)  # raises on a cycle


@settings(max_examples=60, deadline=None)
@given(complete_votesets())
def test_tournament_and_unique_topological_order(votes):
    g = build_ordering_graph(votes)
    run = run_ranked_pairs(g)
    for a in g.vertices:
        for b in g.vertices:
            if a < b:
                assert ((a, b) in run.accepted) != ((b, a) in run.accepted)
    # a tournament's topological order is unique: each prefix vertex beats
    # every later vertex it is compared against directly
    pos = {t: i for i, t in enumerate(run.order)}
    for (a, b) in run.accepted:
        assert pos[a] < pos[b]


@settings(max_examples=60, deadline=None)
@given(complete_votesets())
def test_rejection_witnesses(votes):
    g = build_ordering_graph(votes)
    run = run_ranked_pairs(g)
    accepted = set(run.accepted)
    for rej in run.rejections:
        a, b = rej.edge
        path = rej.witness
        assert path[0] == b and path[-1] == a
        for x, y in zip(path, path[1:]):
            assert (x, y) in accepted
            assert g.weight(x, y) >= rej.weight
        # the reverse path stays out of the source's unanimous successors and
        # the target's unanimous predecessors
        r_a = g.neighborhoods(a).subsequent
        p_b = g.neighborhoods(b).preceding
        assert not (set(path) & r_a)
        assert not (set(path) & p_b)


def test_truncation_invariance_seeded():
    rng = random.Random(20240817)
    for _ in range(150):
        n = rng.randint(1, 6)
        m = rng.randint(2, 7)
        txs = [f"x{j}" for j in range(m)]
        votes = VoteSet.from_sequences([tuple(rng.sample(txs, m)) for _ in range(n)])
        order = ranked_pairs(votes)
        for cut in range(1, m + 1):
            head = order[:cut]
            assert ranked_pairs(restrict_votes(votes, set(head))) == head


def test_custom_edge_order_changes_ties_only():
    # a full custom order that reverses the lexicographic tiebreak still
    # yields a valid tournament over the same vertex set
    votes = dominant_edge_cycle_votes()
    g = build_ordering_graph(votes)
    order = order_edges(dict(g.edges()), tiebreak=lambda e: (e[1], e[0]))
    run = run_ranked_pairs(g, order)
    assert set(run.order) == g.vertices
