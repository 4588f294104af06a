"""Active-learning toolkit for semi-supervised node classification on sparse graphs."""

from .graph import (
    BundleError,
    FeatureMatrix,
    GCN_SELF_LOOP,
    LabelState,
    NormalizedAdjacency,
    PLAIN_SYMMETRIC,
    SparseGraph,
    load_bundle,
    normalize,
    save_bundle,
    spmm,
)
from .propagation import (
    LabelSeed,
    PropagationResult,
    graph_uncertainty,
    lp_posterior,
    propagate,
    row_entropy,
)
from .centrality import (
    CandidatePool,
    CentralityScores,
    PageRankResult,
    build_pool,
    degree_scores,
    pagerank,
)
from .gcn import (
    GcnModel,
    Posterior,
    evaluate,
    f1_scores,
    forward,
    load_checkpoint,
    loss,
    save_checkpoint,
    train_step,
)
from .strategies import (
    ALL_STRATEGIES,
    QueryContext,
    QueryScore,
    build_density_pool,
    build_random_pool,
    delta_h,
    select,
    select_scored,
    smartquery_score,
)
from .harness import (
    ExperimentConfig,
    RunResult,
    config_hash,
    make_splits,
    run_ablation,
    run_active_learning,
    run_suite,
    sweep_budget,
)
from .synth import make_synthetic, write_synthetic_bundle

__version__ = "0.1.0"
