"""Robust active label spreading.

A graph-based active-learning pipeline: label spreading over an RBF affinity
graph produces per-class probabilities, a t-SNE embedding of those
probabilities is clustered with k-means, queries are picked inside clusters by
minimum local average symmetric-KL divergence under a per-cluster bucketing
cap, and a best-vs-second-best confidence gate filters which labels enter the
pool. Includes baselines (entropy uncertainty sampling, random sampling), an
unbalanced synthetic benchmark, an experiment CLI, and an HTTP labeling
service with a browser console.
"""

from .data import FeatureMatrix, LabelPool, RalsConfig, load_csv, z_normalize
from .graph import AffinityGraph, LabelDistribution, rbf_affinity, spread_labels
from .tsne import Embedding, conditional_probabilities, conditional_rows, tsne
from .kmeans import ClusterAssignment, kmeans
from .selection import SelectionScore, bucketed_select, cluster_scores, skl_divergence
from .noise import GroundTruthOracle, NoisyOracle, QueryBatch, QueryCandidate, bvsb_ratio, filter_batch
from .driver import (
    ActiveLearningLoop,
    LoopState,
    RunHistory,
    draw_initial_labels,
    run_rals,
    run_random_sampling,
    run_uncertainty_sampling,
)
from .evaluation import (
    ECG_CLASS_RATIO,
    MetricSnapshot,
    evaluate,
    generate_unbalanced,
    make_one_vs_rest,
    pr_auc,
    pr_curve,
    scaled_class_sizes,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveLearningLoop",
    "AffinityGraph",
    "ClusterAssignment",
    "ECG_CLASS_RATIO",
    "Embedding",
    "FeatureMatrix",
    "GroundTruthOracle",
    "LabelDistribution",
    "LabelPool",
    "LoopState",
    "MetricSnapshot",
    "NoisyOracle",
    "QueryBatch",
    "QueryCandidate",
    "RalsConfig",
    "RunHistory",
    "SelectionScore",
    "bucketed_select",
    "bvsb_ratio",
    "cluster_scores",
    "conditional_probabilities",
    "conditional_rows",
    "draw_initial_labels",
    "evaluate",
    "filter_batch",
    "generate_unbalanced",
    "kmeans",
    "load_csv",
    "make_one_vs_rest",
    "pr_auc",
    "pr_curve",
    "rbf_affinity",
    "run_rals",
    "run_random_sampling",
    "run_uncertainty_sampling",
    "scaled_class_sizes",
    "skl_divergence",
    "spread_labels",
    "tsne",
    "z_normalize",
]
