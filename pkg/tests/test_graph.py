"""Affinity construction and label spreading, checked against the
closed-form fixed point (1-alpha) (I - alpha S)^{-1} Y."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rals.data import FeatureMatrix, LabelPool
from rals.graph import (
    AffinityGraph,
    DegenerateGraphError,
    rbf_affinity,
    spread_labels,
    write_distribution_csv,
)


def closed_form_spread(S: np.ndarray, Y: np.ndarray, alpha: float) -> np.ndarray:
    """Independent oracle: solve the linear system the iteration converges to."""
    n = S.shape[0]
    return (1.0 - alpha) * np.linalg.solve(np.eye(n) - alpha * S, Y)


def one_hot(pool: LabelPool) -> np.ndarray:
    y = np.zeros((pool.n_samples, pool.n_classes))
    for idx in pool.labeled:
        y[idx, pool.observed[idx]] = 1.0
    return y


def random_instance(seed: int, n_max: int = 80, c_max: int = 5):
    """Seeded features plus a pool whose labeled set covers >= 2 classes."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, n_max + 1))
    c = int(rng.integers(2, c_max + 1))
    d = int(rng.integers(2, 7))
    features = FeatureMatrix(rng.normal(size=(n, d)))
    truth = rng.integers(0, c, size=n)
    truth[:c] = np.arange(c)  # every class present
    pool = LabelPool(ground_truth=truth.astype(np.int64), n_classes=c)
    n_labeled = int(rng.integers(2, max(3, n // 3)))
    chosen = rng.permutation(n)[:n_labeled]
    if len({int(truth[i]) for i in chosen}) < 2:
        chosen[0], chosen[1] = 0, 1  # rows 0 and 1 differ by construction
    for idx in chosen:
        pool.add_label(int(idx), int(truth[idx]), "initial")
    return features, pool


class TestRbfAffinity:
    def test_weights_symmetric_zero_diagonal(self):
        features, _ = random_instance(0)
        graph = rbf_affinity(features, 0.25)
        np.testing.assert_array_equal(graph.weights, graph.weights.T)
        np.testing.assert_array_equal(np.diag(graph.weights), 0.0)
        assert graph.weights.min() >= 0.0 and graph.weights.max() <= 1.0

    def test_normalization_matches_definition(self):
        features, _ = random_instance(1)
        graph = rbf_affinity(features, 0.25)
        d_inv_sqrt = 1.0 / np.sqrt(graph.weights.sum(axis=1))
        expected = graph.weights * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
        np.testing.assert_array_equal(graph.normalized, expected)

    def test_normalized_spectrum_within_unit_interval(self):
        features, _ = random_instance(2)
        graph = rbf_affinity(features, 0.25)
        eigenvalues = np.linalg.eigvalsh(graph.normalized)
        assert eigenvalues.min() >= -1.0 - 1e-9
        assert eigenvalues.max() <= 1.0 + 1e-9

    def test_knn_sparsification_stays_symmetric(self):
        features, _ = random_instance(3)
        graph = rbf_affinity(features, 0.25, knn=4)
        np.testing.assert_array_equal(graph.weights, graph.weights.T)
        dense = rbf_affinity(features, 0.25)
        kept = graph.weights > 0
        # every kept edge carries the dense kernel value
        np.testing.assert_array_equal(graph.weights[kept], dense.weights[kept])
        assert kept.sum() < (dense.weights > 0).sum()

    def test_knn_must_be_smaller_than_n(self):
        features, _ = random_instance(4)
        with pytest.raises(ValueError, match="knn"):
            rbf_affinity(features, 0.25, knn=features.n_samples)

    def test_isolated_sample_raises_with_index(self):
        features = FeatureMatrix(np.array([[0.0], [0.1], [1e6]]))
        with pytest.raises(DegenerateGraphError) as exc:
            rbf_affinity(features, 1.0)
        assert exc.value.index == 2

    def test_gamma_must_be_positive(self):
        features, _ = random_instance(5)
        with pytest.raises(ValueError, match="gamma"):
            rbf_affinity(features, 0.0)


class TestSpreadLabels:
    @pytest.mark.parametrize("seed", range(10))
    def test_iteration_converges_to_closed_form(self, seed):
        features, pool = random_instance(seed)
        graph = rbf_affinity(features, 0.25)
        dist = spread_labels(graph, pool, alpha=0.2, tol=1e-12, max_iter=2000)
        expected = closed_form_spread(graph.normalized, one_hot(pool), 0.2)
        assert dist.converged
        np.testing.assert_allclose(dist.raw, expected, atol=1e-10)

    def test_probs_are_row_normalized(self):
        features, pool = random_instance(11)
        graph = rbf_affinity(features, 0.25)
        dist = spread_labels(graph, pool, alpha=0.2)
        np.testing.assert_allclose(dist.probs.sum(axis=1), 1.0, atol=1e-12)
        assert dist.probs.min() >= 0.0

    def test_disconnected_component_falls_back_to_uniform(self):
        # Two far blobs sparsified to disjoint components; labels only in one.
        blob_a = np.random.default_rng(0).normal(size=(6, 2))
        blob_b = np.random.default_rng(1).normal(size=(6, 2)) + 1000.0
        features = FeatureMatrix(np.vstack([blob_a, blob_b]))
        pool = LabelPool(ground_truth=np.array([0] * 6 + [1] * 6), n_classes=2)
        pool.add_label(0, 0, "initial")
        pool.add_label(1, 1, "initial")
        graph = rbf_affinity(features, 0.25, knn=3)
        assert np.all(graph.weights[:6, 6:] == 0.0)
        dist = spread_labels(graph, pool, alpha=0.2)
        np.testing.assert_array_equal(dist.raw[6:], 0.0)
        np.testing.assert_allclose(dist.probs[6:], 0.5)

    def test_residuals_decrease_on_seeded_instances(self):
        for seed in range(5):
            features, pool = random_instance(seed + 20)
            graph = rbf_affinity(features, 0.25)
            dist = spread_labels(graph, pool, alpha=0.2, tol=1e-10)
            diffs = np.diff(np.asarray(dist.residuals))
            assert np.all(diffs <= 1e-15)

    def test_deterministic_bit_for_bit(self):
        features, pool = random_instance(30)
        graph = rbf_affinity(features, 0.25)
        a = spread_labels(graph, pool, alpha=0.2)
        b = spread_labels(graph, pool, alpha=0.2)
        np.testing.assert_array_equal(a.probs, b.probs)
        assert a.residuals == b.residuals

    def test_alpha_bounds(self):
        features, pool = random_instance(31)
        graph = rbf_affinity(features, 0.25)
        for alpha in (0.0, 1.0, -0.5):
            with pytest.raises(ValueError, match="alpha"):
                spread_labels(graph, pool, alpha=alpha)

    def test_requires_two_labeled_classes(self):
        features, _ = random_instance(32)
        pool = LabelPool(ground_truth=np.array([0, 1] * 10), n_classes=2)
        with pytest.raises(ValueError, match="labeled set is empty"):
            spread_labels(rbf_affinity(features, 0.25), pool, alpha=0.2)
        pool.add_label(0, 0, "initial")
        pool.add_label(2, 0, "initial")
        with pytest.raises(ValueError, match="2 distinct classes"):
            spread_labels(rbf_affinity(features, 0.25), pool, alpha=0.2)

    def test_pool_graph_size_mismatch(self):
        features, pool = random_instance(33)
        small = FeatureMatrix(features.values[:-1])
        with pytest.raises(ValueError, match="sample count"):
            spread_labels(rbf_affinity(small, 0.25), pool, alpha=0.2)

    def test_unconverged_run_is_flagged_not_raised(self):
        features, pool = random_instance(34)
        graph = rbf_affinity(features, 0.25)
        dist = spread_labels(graph, pool, alpha=0.2, tol=1e-12, max_iter=2)
        assert not dist.converged
        assert dist.iterations == 2

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        alpha=st.floats(0.05, 0.95),
    )
    def test_fixed_point_property(self, seed, alpha):
        """F* = alpha S F* + (1-alpha) Y holds at the converged solution."""
        features, pool = random_instance(seed, n_max=30)
        graph = rbf_affinity(features, 0.25)
        dist = spread_labels(graph, pool, alpha=alpha, tol=1e-13, max_iter=5000)
        y = one_hot(pool)
        reconstructed = alpha * graph.normalized @ dist.raw + (1 - alpha) * y
        np.testing.assert_allclose(reconstructed, dist.raw, atol=1e-11)

    def test_distribution_csv_round_trip(self, tmp_path):
        features, pool = random_instance(35)
        graph = rbf_affinity(features, 0.25)
        dist = spread_labels(graph, pool, alpha=0.2)
        path = tmp_path / "dist.csv"
        write_distribution_csv(dist, path)
        back = np.loadtxt(path, delimiter=",")
        np.testing.assert_array_equal(back, dist.probs)
