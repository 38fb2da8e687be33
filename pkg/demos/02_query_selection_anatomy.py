"""Dissect one query-selection round on an unbalanced three-class set.

The pipeline embeds the current label distribution with t-SNE, clusters the
embedding, ranks each cluster's members by how representative they are
(ascending local average symmetric KL), and walks that ranking under a
per-cluster cap. The script runs a single round, then prints every stage
from the snapshot and shows what the best-vs-second-best gate would do to
the same batch in self-estimated mode.
"""

from rals import (
    ActiveLearningLoop,
    GroundTruthOracle,
    RalsConfig,
    draw_initial_labels,
    generate_unbalanced,
)

features, pool = generate_unbalanced(seed=3, class_sizes=[200, 60, 20], dims=4, separation=4.0)
draw_initial_labels(pool, 8, seed=3)
print(f"dataset: {features.n_samples} points, class sizes [200, 60, 20], 8 initial labels")

config = RalsConfig(
    gamma=0.6,
    batch_size=12,
    label_budget=20,
    embed_dim=2,
    embed_source="raw-features",
    perplexity=12.0,
    tsne_iters=250,
    kmeans_k=4,
    kmeans_restarts=5,
    label_mode="oracle",
    seed=3,
)
loop = ActiveLearningLoop(features, pool, config, "rals")
state = loop.step(GroundTruthOracle(pool.ground_truth))

clusters = state.clusters
print(f"\nembedding clustered into {clusters.n_clusters} groups, sizes {clusters.sizes}")
cap = config.batch_size // clusters.n_clusters + 1
print(f"bucketing cap: floor({config.batch_size}/{clusters.n_clusters}) + 1 = {cap} per cluster")

print("\nselected batch, in admission order:")
print(f"{'index':>6} {'cluster':>8} {'skl score':>10} {'bvsb ratio':>11} {'truth':>6}")
for cand in state.batch.candidates:
    print(
        f"{cand.sample_index:>6} {cand.cluster_id:>8} {cand.skl_score:>10.4f} "
        f"{min(cand.bvsb_ratio, 1e6):>11.1f} {int(loop.pool.ground_truth[cand.sample_index]):>6}"
    )

per_cluster = {}
for cand in state.batch.candidates:
    per_cluster[cand.cluster_id] = per_cluster.get(cand.cluster_id, 0) + 1
print(f"per-cluster counts {per_cluster}: no cluster exceeds the cap of {cap}")

print("\nself-estimated gate on the same rows (accept iff ratio > delta):")
for delta in (10.0, 100.0):
    kept = sum(1 for cand in state.batch.candidates if cand.bvsb_ratio > delta)
    print(f"  delta {delta:>5.0f}: would accept {kept} of {len(state.batch.candidates)} without asking an annotator")
print("low-ratio rows are the undiscovered regions; only an annotator can label those.")
print(f"\nafter the commit: {state.labeled_count} labeled, total accuracy {state.metrics.total_accuracy:.3f}")
