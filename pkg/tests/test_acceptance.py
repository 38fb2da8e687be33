"""End-to-end acceptance checks, one per pipeline guarantee.

Every test carries its own independent oracle (closed-form solve, brute
force, finite differences, hand arithmetic) and pins the tolerance it
asserts. The two directional benchmarks at the bottom run the full
2000-point protocol ten times each and take several minutes apiece.
"""

import math
import time

import numpy as np
import pytest

from rals.data import FeatureMatrix, LabelPool, RalsConfig
from rals.driver import ActiveLearningLoop, draw_initial_labels
from rals.evaluation import ECG_CLASS_RATIO, generate_unbalanced, scaled_class_sizes
from rals.graph import LabelDistribution, rbf_affinity, spread_labels
from rals.kmeans import kmeans
from rals.noise import GroundTruthOracle, NoisyOracle, bvsb_ratio, filter_batch
from rals.selection import SMOOTHING_EPS, SelectionScore, bucketed_select, cluster_scores
from rals.tsne import conditional_probabilities, conditional_rows, tsne_gradient, tsne_objective


# --- independent oracles -------------------------------------------------


def closed_form_spread(S, Y, alpha):
    """Direct solve of the spreading fixed point: F = (1-a)(I - aS)^-1 Y,
    rows normalized to probabilities afterwards."""
    n = S.shape[0]
    F = (1.0 - alpha) * np.linalg.solve(np.eye(n) - alpha * S, Y)
    return F / F.sum(axis=1, keepdims=True)


def skl_pair(p, q, eps=SMOOTHING_EPS):
    """Two directed KL sums over smoothed distributions, plain Python."""
    c = len(p)
    ps = [(v + eps) / (1.0 + c * eps) for v in p]
    qs = [(v + eps) / (1.0 + c * eps) for v in q]
    forward = sum(a * math.log(a / b) for a, b in zip(ps, qs))
    backward = sum(b * math.log(b / a) for a, b in zip(ps, qs))
    return forward + backward


def brute_ranking(probs, labels, unlabeled):
    """Double-loop scoring: mean SKL of each candidate against every member
    of its cluster (itself included), ranked ascending with index ties."""
    scored = []
    for j in unlabeled:
        members = [i for i in range(len(probs)) if labels[i] == labels[j]]
        score = sum(skl_pair(probs[j], probs[i]) for i in members) / len(members)
        scored.append((max(score, 0.0), int(j), int(labels[j])))
    scored.sort(key=lambda t: (t[0], t[1]))
    return scored


def brute_bucketed(ranked_pairs, M, C):
    """Reference capped walk: admit in rank order, raise the cap by one and
    rewalk whenever a full pass cannot place M."""
    cap = M // C + 1
    admitted = []
    counts = {}
    while len(admitted) < M:
        placed = False
        for index, cluster in ranked_pairs:
            if index in admitted or counts.get(cluster, 0) >= cap:
                continue
            admitted.append(index)
            counts[cluster] = counts.get(cluster, 0) + 1
            placed = True
            if len(admitted) == M:
                break
        if len(admitted) < M:
            if not placed:
                cap += 1
    return admitted


def finite_difference_gradient(Y, P, h=1e-6):
    """Central differences of the embedding objective, one coordinate at a time."""
    grad = np.zeros_like(Y)
    for i in range(Y.shape[0]):
        for d in range(Y.shape[1]):
            plus = Y.copy()
            minus = Y.copy()
            plus[i, d] += h
            minus[i, d] -= h
            grad[i, d] = (tsne_objective(plus, P) - tsne_objective(minus, P)) / (2.0 * h)
    return grad


def row_perplexities(rows):
    """exp(entropy) of each row, with 0 log 0 = 0."""
    out = []
    for row in rows:
        positive = row[row > 0.0]
        out.append(float(np.exp(-np.sum(positive * np.log(positive)))))
    return np.array(out)


def as_distribution(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return LabelDistribution(
        probs=probs,
        raw=probs,
        iterations=1,
        final_residual=0.0,
        converged=True,
        residuals=(0.0,),
    )


# --- shared benchmark protocol -------------------------------------------

BENCHMARK_SEEDS = range(10)
MODES_PER_CLASS = (6, 1, 2, 2, 3, 1)


def benchmark_dataset(seed, n=2000, dims=4, separation=3.0):
    """Six classes in the ECG imbalance ratio, each spread over several
    Gaussian modes, so coverage (not just volume) decides accuracy."""
    class_sizes = scaled_class_sizes(ECG_CLASS_RATIO, n)
    mode_sizes = []
    mode_class = []
    for cls, (size, modes) in enumerate(zip(class_sizes, MODES_PER_CLASS)):
        split = scaled_class_sizes([1] * modes, size) if modes > 1 else [size]
        mode_sizes.extend(split)
        mode_class.extend([cls] * len(split))
    features, mode_pool = generate_unbalanced(
        seed=seed, class_sizes=mode_sizes, dims=dims, separation=separation
    )
    truth = np.asarray(mode_class, dtype=np.int64)[mode_pool.ground_truth]
    return features, LabelPool(ground_truth=truth, n_classes=len(class_sizes))


def benchmark_config(seed, **overrides):
    return RalsConfig(
        gamma=0.8,
        alpha=0.2,
        batch_size=50,
        label_budget=175,
        embed_dim=6,
        embed_source="raw-features",
        perplexity=10.0,
        tsne_iters=500,
        kmeans_k=17,
        kmeans_restarts=20,
        label_mode="oracle",
        seed=seed,
        **overrides,
    )


def final_metrics(features, pool, config, strategy, oracle):
    history = ActiveLearningLoop(features, pool, config, strategy).run(oracle)
    return history.final.metrics


# --- criteria -------------------------------------------------------------


def test_spreading_matches_closed_form():
    start = time.monotonic()
    rng = np.random.default_rng(1207)
    for _ in range(25):
        n = int(rng.integers(20, 201))
        c = int(rng.integers(2, 7))
        dims = int(rng.integers(2, 8))
        alpha = float(rng.uniform(0.1, 0.9))
        gamma = float(rng.uniform(0.1, 1.5))

        features = FeatureMatrix(rng.normal(size=(n, dims)))
        truth = rng.integers(0, c, size=n)
        truth[:2] = [0, 1]
        pool = LabelPool(ground_truth=truth.astype(np.int64), n_classes=c)
        draw_initial_labels(pool, int(rng.integers(3, max(4, n // 3))), int(rng.integers(1 << 30)))

        graph = rbf_affinity(features, gamma)
        iterated = spread_labels(graph, pool, alpha, tol=1e-13, max_iter=8000)

        Y = np.zeros((n, c))
        Y[pool.labeled_indices(), pool.observed_labels()] = 1.0
        direct = closed_form_spread(graph.normalized, Y, alpha)

        assert np.max(np.abs(iterated.probs - direct)) <= 1e-8
    assert time.monotonic() - start < 30.0


def test_selection_matches_brute_force():
    start = time.monotonic()
    rng = np.random.default_rng(93)
    for _ in range(25):
        n = int(rng.integers(10, 61))
        c = int(rng.integers(2, 6))
        k = int(rng.integers(2, 7))
        features = FeatureMatrix(rng.normal(size=(n, 3)))
        truth = rng.integers(0, c, size=n)
        truth[:2] = [0, 1]
        pool = LabelPool(ground_truth=truth.astype(np.int64), n_classes=c)
        draw_initial_labels(pool, int(rng.integers(2, max(3, n // 2))), int(rng.integers(1 << 30)))

        F = spread_labels(rbf_affinity(features, float(rng.uniform(0.05, 0.4))), pool, 0.3)
        clusters = kmeans(features.values, k, seed=int(rng.integers(1 << 30)), restarts=2)
        unlabeled = pool.unlabeled_indices()

        scores = cluster_scores(F, clusters, unlabeled)
        reference = brute_ranking(F.probs, clusters.labels, unlabeled)

        assert [s.sample_index for s in scores] == [t[1] for t in reference]
        assert [s.cluster_id for s in scores] == [t[2] for t in reference]
        assert [s.rank for s in scores] == list(range(len(reference)))
        for got, want in zip(scores, reference):
            assert got.score == pytest.approx(want[0], rel=1e-9, abs=1e-12)

        M = int(rng.integers(1, min(12, len(unlabeled)) + 1))
        ranked_pairs = [(t[1], t[2]) for t in reference]
        assert bucketed_select(scores, M, clusters.n_clusters) == brute_bucketed(
            ranked_pairs, M, clusters.n_clusters
        )
    assert time.monotonic() - start < 10.0


def test_tsne_gradient_matches_finite_differences():
    start = time.monotonic()
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(8, 3))
        P = conditional_probabilities(X, perplexity=2.3)
        Y = rng.normal(scale=0.8, size=(8, 2))

        analytic = tsne_gradient(Y, P)
        numeric = finite_difference_gradient(Y, P)

        denominator = np.linalg.norm(numeric)
        assert denominator > 0.0
        assert np.linalg.norm(analytic - numeric) / denominator < 1e-5
    assert time.monotonic() - start < 10.0


def test_every_conditional_row_hits_target_perplexity():
    rng = np.random.default_rng(5511)
    datasets = [
        (rng.normal(size=(40, 2)), 5.0),
        (rng.normal(size=(80, 5)) * 0.01, 12.0),
        (rng.normal(size=(120, 3)) * 100.0, 30.0),
        (rng.normal(size=(64, 8)), 20.0),
        # two blobs three orders of magnitude apart in scale
        (
            np.vstack(
                [
                    rng.normal(size=(30, 3)) * 0.001,
                    rng.normal(loc=5.0, size=(30, 3)),
                ]
            ),
            8.0,
        ),
    ]
    for X, target in datasets:
        rows = conditional_rows(X, target)
        achieved = row_perplexities(rows)
        assert np.max(np.abs(achieved / target - 1.0)) <= 1e-4


def test_bvsb_gate_shrinks_with_delta_and_matches_hand_ratio():
    rng = np.random.default_rng(77)
    probs = np.vstack(
        [
            rng.dirichlet([0.3] * 4, size=60),
            rng.dirichlet([3.0] * 4, size=60),
        ]
    )
    F = as_distribution(probs)
    selected = list(range(len(probs)))

    accepted = {}
    for delta in (1.5, 10.0, 100.0, 1000.0):
        batch = filter_batch(selected, F, delta, "self-estimated")
        accepted[delta] = {c.sample_index for c in batch.accepted}

    assert accepted[1000.0] <= accepted[100.0] <= accepted[10.0] <= accepted[1.5]
    assert len(accepted[1.5]) > len(accepted[1000.0])

    row = np.array([0.99, 0.005, 0.005])
    hand_ratio = 0.99 / 0.005
    ratio, best, second = bvsb_ratio(row)
    assert ratio == pytest.approx(hand_ratio, rel=1e-12)
    assert ratio == pytest.approx(198.0, rel=1e-12)
    assert (best, second) == (0, 1)
    gate = filter_batch([0], as_distribution(row[None, :]), 100.0, "self-estimated")
    assert gate.accepted_count == 1 and gate.accepted[0].assigned_label == 0


def test_cluster_cap_exhaustive_over_batch_and_cluster_counts():
    rng = np.random.default_rng(4242)
    for M in range(1, 13):
        for C in range(1, 13):
            cap = M // C + 1

            # generous: every cluster offers more than the cap
            ranked = []
            index = 0
            for cluster in range(C):
                for _ in range(cap + 2):
                    ranked.append((index, cluster))
                    index += 1
            rng.shuffle(ranked)
            scores = [
                SelectionScore(sample_index=i, cluster_id=cl, score=float(rank), rank=rank)
                for rank, (i, cl) in enumerate(ranked)
            ]
            picked = bucketed_select(scores, M, C)
            assert len(picked) == M and len(set(picked)) == M
            by_cluster = {i: cl for i, cl in ranked}
            counts = {}
            for i in picked:
                counts[by_cluster[i]] = counts.get(by_cluster[i], 0) + 1
            assert max(counts.values()) <= cap
            assert picked == brute_bucketed(ranked, M, C)

            # starved: one deep cluster plus singletons, cap must relax
            if C >= 2 and cap + (C - 1) < M:
                ranked = [(i, 0) for i in range(M)]
                ranked += [(M + j, 1 + j) for j in range(C - 1)]
                scores = [
                    SelectionScore(sample_index=i, cluster_id=cl, score=float(rank), rank=rank)
                    for rank, (i, cl) in enumerate(ranked)
                ]
                picked = bucketed_select(scores, M, C)
                assert len(picked) == M and len(set(picked)) == M
                deep = sum(1 for i in picked if i < M)
                assert deep > cap
                assert picked == brute_bucketed(ranked, M, C)


def test_loop_runs_exactly_three_rounds_to_budget():
    sizes = scaled_class_sizes(ECG_CLASS_RATIO, 400)
    features, pool = generate_unbalanced(seed=11, class_sizes=sizes, dims=4, separation=5.0)
    draw_initial_labels(pool, 25, 11)
    config = RalsConfig(
        gamma=0.5,
        batch_size=50,
        label_budget=175,
        embed_dim=2,
        embed_source="raw-features",
        perplexity=8.0,
        tsne_iters=250,
        kmeans_k=6,
        kmeans_restarts=2,
        label_mode="oracle",
        seed=11,
    )
    loop = ActiveLearningLoop(features, pool, config, "rals")
    history = loop.run(GroundTruthOracle(pool.ground_truth))

    assert [s.iteration for s in history.snapshots] == [0, 1, 2, 3]
    assert history.final.labeled_count == 175
    assert not loop.can_continue()


def test_benchmark_rals_beats_both_baselines():
    start = time.monotonic()
    sizes = scaled_class_sizes(ECG_CLASS_RATIO, 2000)
    minority_classes = sorted(range(len(sizes)), key=lambda c: sizes[c])[:2]

    averages = {name: [] for name in ("rals", "us", "random")}
    minority = {name: [] for name in ("rals", "us")}
    for seed in BENCHMARK_SEEDS:
        features, pool = benchmark_dataset(seed)
        draw_initial_labels(pool, 25, seed)
        oracle = GroundTruthOracle(pool.ground_truth)
        for name in averages:
            metrics = final_metrics(features, pool, benchmark_config(seed), name, oracle)
            averages[name].append(metrics.average_accuracy)
            if name in minority:
                recalls = {m.class_id: m.recall for m in metrics.per_class}
                minority[name].append(np.mean([recalls[c] for c in minority_classes]))

    rals = np.array(averages["rals"])
    for name in ("us", "random"):
        base = np.array(averages[name])
        diffs = rals - base
        print(
            f"\nbenchmark avg-acc rals {rals.mean():.4f} +- {rals.std():.4f} "
            f"vs {name} {base.mean():.4f} +- {base.std():.4f} "
            f"(paired diff {diffs.mean():.4f} +- {diffs.std():.4f})"
        )
        assert diffs.mean() >= 0.5 * diffs.std()

    assert np.mean(minority["rals"]) > np.mean(minority["us"])
    assert time.monotonic() - start < 900.0


def test_noisy_oracle_gate_keeps_accuracy():
    # The gate rejects answers the current model is near-tied on, which under
    # this protocol are exactly the discovery queries into unlabeled modes.
    wins = 0
    for seed in BENCHMARK_SEEDS:
        totals = {}
        for gated in (True, False):
            features, pool = benchmark_dataset(seed)
            draw_initial_labels(pool, 25, seed)
            oracle = NoisyOracle(
                pool.ground_truth,
                n_classes=pool.n_classes,
                flip_probability=0.2,
                seed=seed,
            )
            config = benchmark_config(seed, gate_oracle_labels=gated)
            totals[gated] = final_metrics(features, pool, config, "rals", oracle).total_accuracy
        wins += totals[True] >= totals[False]
    print(f"\ngated >= ungated on {wins} of {len(list(BENCHMARK_SEEDS))} seeds")
    assert wins >= 7
