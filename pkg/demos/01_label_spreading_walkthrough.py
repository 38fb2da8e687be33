"""Walk through label spreading on two touching blobs.

Three labeled points are enough to color 200: the script builds the RBF
affinity graph, iterates the spreading update, and shows how the clamping
weight alpha trades conviction near the labels against reach far from them.
"""

import numpy as np

from rals import FeatureMatrix, LabelPool, rbf_affinity, spread_labels

rng = np.random.default_rng(7)

blob_a = rng.normal(loc=(0.0, 0.0), scale=0.6, size=(120, 2))
blob_b = rng.normal(loc=(3.0, 0.5), scale=0.6, size=(80, 2))
features = FeatureMatrix(np.vstack([blob_a, blob_b]))
truth = np.array([0] * 120 + [1] * 80, dtype=np.int64)

pool = LabelPool(ground_truth=truth, n_classes=2)
pool.add_label(0, 0, "initial")
pool.add_label(5, 0, "initial")
pool.add_label(150, 1, "initial")

graph = rbf_affinity(features, gamma=1.0)
print(f"graph: {graph.n_samples} nodes, degrees {graph.degrees.min():.2f}..{graph.degrees.max():.2f}")

for alpha in (0.2, 0.5, 0.9):
    dist = spread_labels(graph, pool, alpha=alpha)
    accuracy = float((dist.predictions() == truth).mean())
    margin = float(np.abs(dist.probs[:, 0] - dist.probs[:, 1]).mean())
    print(
        f"alpha {alpha:.1f}: converged in {dist.iterations} sweeps "
        f"(residual {dist.final_residual:.1e}), accuracy {accuracy:.3f}, "
        f"mean class margin {margin:.3f}"
    )

dist = spread_labels(graph, pool, alpha=0.5)
print("\nfive most contested points (smallest margin):")
margins = np.abs(dist.probs[:, 0] - dist.probs[:, 1])
for idx in np.argsort(margins)[:5]:
    x, y = features.values[idx]
    print(
        f"  point {idx:3d} at ({x:+.2f}, {y:+.2f}) "
        f"p0 {dist.probs[idx, 0]:.3f} p1 {dist.probs[idx, 1]:.3f} truth {truth[idx]}"
    )
print("\nthe contested points sit in the bridge between the blobs, where")
print("mass from both labeled regions arrives with comparable strength.")
