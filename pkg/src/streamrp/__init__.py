"""Streaming Ranked Pairs ordering with fairness and liveness auditors."""

from .core import (
    IncompleteVoteError,
    Neighborhoods,
    OrderingGraph,
    OrderingVote,
    RankedPairsRun,
    RejectedEdge,
    TransactionId,
    VoteError,
    VoteSet,
    build_ordering_graph,
    edge_iteration_order,
    neighborhoods,
    ranked_pairs,
    restrict_votes,
    run_ranked_pairs,
    txid_digest,
)
from .streaming import (
    FUTURE,
    DecisionLedger,
    DecisionMap,
    InternalFault,
    LedgerEntry,
    LiveStep,
    PrefixViolationError,
    Status,
    StreamedOrderingGraph,
    StreamState,
    build_streamed_graph,
    emit_prefix,
    indeterminacy_witness,
    locality_set,
    materialized_edge_order,
    round_graph,
    stream_step_live,
    stream_step_preliminary,
)
from .audit import (
    BatchDecomposition,
    FairnessVerdict,
    PathWitness,
    ReceiptProfile,
    aequitas_baseline,
    audit_all_gamma,
    audit_exact_minimality,
    audit_pairwise_fairness,
    batch_decomposition,
    flatten_batches,
    gamma_grid,
)
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
    descending_pairs_tiebreak,
    fabricate_missing_votes,
    generate_impossibility_instance,
    generate_nonlive_instance,
    liveness_bound,
    measure_liveness,
    run_simulation,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
