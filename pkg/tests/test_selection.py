"""Tests for SKL scoring and bucketed batch selection."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rals.graph import LabelDistribution
from rals.kmeans import ClusterAssignment
from rals.selection import (
    SMOOTHING_EPS,
    SelectionScore,
    bucketed_select,
    cluster_scores,
    selection_trace,
    skl_divergence,
)


def two_sum_skl(p, q, eps=SMOOTHING_EPS):
    """Independent SKL route: the two directed KL sums, term by term."""
    c = len(p)
    ps = [(v + eps) / (1.0 + c * eps) for v in p]
    qs = [(v + eps) / (1.0 + c * eps) for v in q]
    forward = sum(a * math.log(a / b) for a, b in zip(ps, qs))
    backward = sum(b * math.log(b / a) for a, b in zip(ps, qs))
    return forward + backward


def brute_force_scores(probs, labels, unlabeled, include_self=True):
    """Double-loop oracle for the per-cluster average SKL score."""
    out = {}
    for j in unlabeled:
        members = [i for i in range(len(probs)) if labels[i] == labels[j]]
        total = 0.0
        for i in members:
            if not include_self and i == j:
                continue
            total += two_sum_skl(probs[j], probs[i])
        out[j] = total / len(members)
    return out


def walk_admit(ranked, M, C):
    """Reference bucketing walk: (index, cluster) pairs in rank order.

    Returns the admitted indices and the cap in force when the walk ended.
    """
    cap = M // C + 1
    admitted = []
    counts = {}
    while len(admitted) < M:
        for index, cluster in ranked:
            if index in admitted or counts.get(cluster, 0) >= cap:
                continue
            admitted.append(index)
            counts[cluster] = counts.get(cluster, 0) + 1
            if len(admitted) == M:
                break
        if len(admitted) < M:
            cap += 1
    return admitted, cap


def make_distribution(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return LabelDistribution(
        probs=probs,
        raw=probs.copy(),
        iterations=1,
        final_residual=0.0,
        converged=True,
        residuals=(0.0,),
    )


def make_clusters(labels, k=None):
    labels = np.asarray(labels, dtype=np.int64)
    k = k or int(labels.max()) + 1
    return ClusterAssignment(
        labels=labels,
        centroids=np.zeros((k, 2)),
        sizes=tuple(int(v) for v in np.bincount(labels, minlength=k)),
        inertia=0.0,
        iterations=1,
        converged=True,
    )


def random_instance(seed, n=None, c=None, k=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(5, 61))
    c = c or int(rng.integers(2, 7))
    k = k or int(rng.integers(1, 5))
    probs = rng.dirichlet(np.ones(c) * rng.uniform(0.3, 3.0), size=n)
    labels = rng.integers(0, k, size=n)
    labeled = set(rng.choice(n, size=max(1, n // 5), replace=False).tolist())
    unlabeled = sorted(set(range(n)) - labeled)
    return probs, labels, unlabeled


class TestSklDivergence:
    def test_identical_distributions_score_zero(self):
        assert skl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_hand_evaluated_two_class_case(self):
        # forward KL 0.8*ln 9, backward the same, total 1.6*ln 9
        got = skl_divergence([0.9, 0.1], [0.1, 0.9])
        assert got == pytest.approx(1.6 * math.log(9.0), rel=1e-9)
        assert got == pytest.approx(3.5156, abs=5e-4)

    def test_matches_two_sum_route(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c = int(rng.integers(2, 8))
            p = rng.dirichlet(np.ones(c))
            q = rng.dirichlet(np.ones(c))
            assert skl_divergence(p, q) == pytest.approx(two_sum_skl(p, q), rel=1e-12, abs=1e-12)

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            p = rng.dirichlet(np.ones(4))
            q = rng.dirichlet(np.ones(4))
            assert skl_divergence(p, q) == skl_divergence(q, p)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            p = rng.dirichlet(np.ones(3))
            q = rng.dirichlet(np.ones(3))
            assert skl_divergence(p, q) >= 0.0

    def test_zero_entries_stay_finite(self):
        value = skl_divergence([1.0, 0.0], [0.0, 1.0])
        assert math.isfinite(value)
        assert value > 10.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="equal length"):
            skl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


class TestClusterScores:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force_oracle(self, seed):
        probs, labels, unlabeled = random_instance(seed)
        oracle = brute_force_scores(probs, labels, unlabeled)
        got = cluster_scores(make_distribution(probs), make_clusters(labels), unlabeled)
        assert [s.sample_index for s in got] == sorted(
            unlabeled, key=lambda j: (oracle[j], j)
        )
        for s in got:
            assert s.score == pytest.approx(oracle[s.sample_index], abs=1e-10)

    def test_ranking_shape(self):
        probs, labels, unlabeled = random_instance(3)
        got = cluster_scores(make_distribution(probs), make_clusters(labels), unlabeled)
        assert [s.rank for s in got] == list(range(len(unlabeled)))
        scores = [s.score for s in got]
        assert scores == sorted(scores)
        assert all(s.score >= 0.0 and math.isfinite(s.score) for s in got)

    def test_identical_rows_all_score_zero(self):
        probs = np.tile([0.25, 0.75], (6, 1))
        got = cluster_scores(make_distribution(probs), make_clusters([0] * 6), range(6))
        assert all(s.score <= 1e-12 for s in got)

    def test_outlier_row_scores_strictly_higher(self):
        probs = np.array([[0.9, 0.1], [0.9, 0.1], [0.9, 0.1], [0.5, 0.5]])
        got = cluster_scores(make_distribution(probs), make_clusters([0] * 4), range(4))
        by_index = {s.sample_index: s.score for s in got}
        assert all(by_index[3] > by_index[j] for j in range(3))

    def test_self_term_is_neutral(self):
        probs, labels, unlabeled = random_instance(5)
        without_self = brute_force_scores(probs, labels, unlabeled, include_self=False)
        got = cluster_scores(make_distribution(probs), make_clusters(labels), unlabeled)
        for s in got:
            assert s.score == pytest.approx(without_self[s.sample_index], abs=1e-10)

    def test_labeled_members_count_toward_the_average(self):
        # j sits in a 2-member cluster with one labeled sample; its score is
        # half the pairwise SKL, not zero
        probs = np.array([[0.8, 0.2], [0.3, 0.7], [0.5, 0.5]])
        got = cluster_scores(make_distribution(probs), make_clusters([0, 0, 1]), [1, 2])
        by_index = {s.sample_index: s.score for s in got}
        assert by_index[1] == pytest.approx(
            two_sum_skl([0.3, 0.7], [0.8, 0.2]) / 2.0, rel=1e-12
        )

    def test_score_ties_fall_back_to_lower_index(self):
        probs = np.array([[0.6, 0.4]] * 4 + [[0.1, 0.9]])
        got = cluster_scores(make_distribution(probs), make_clusters([0] * 5), range(5))
        assert [s.sample_index for s in got] == [0, 1, 2, 3, 4]

    def test_empty_unlabeled_set_rejected(self):
        probs = np.array([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ValueError, match="empty unlabeled"):
            cluster_scores(make_distribution(probs), make_clusters([0, 0]), [])

    def test_coverage_mismatch_rejected(self):
        probs = np.array([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ValueError, match="covers 2 samples"):
            cluster_scores(make_distribution(probs), make_clusters([0, 0]), [0])

    def test_out_of_range_index_rejected(self):
        probs = np.array([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ValueError, match="out of range"):
            cluster_scores(make_distribution(probs), make_clusters([0, 0]), [0, 5])


def ranked_scores(pairs):
    """Build a sorted SelectionScore list from (index, cluster, score)."""
    ordered = sorted(pairs, key=lambda t: (t[2], t[0]))
    return [
        SelectionScore(sample_index=i, cluster_id=c, score=v, rank=r)
        for r, (i, c, v) in enumerate(ordered)
    ]


class TestBucketedSelect:
    def test_single_cluster_relaxes_until_filled(self):
        scores = ranked_scores([(i, 0, float(i)) for i in range(9)])
        assert bucketed_select(scores, M=6, C=3) == [0, 1, 2, 3, 4, 5]

    def test_three_easy_clusters_take_the_cheapest_six(self):
        pairs = [(i, i % 3, float(i)) for i in range(12)]
        scores = ranked_scores(pairs)
        assert bucketed_select(scores, M=6, C=3) == [0, 1, 2, 3, 4, 5]

    def test_single_pick_ignores_clusters(self):
        scores = ranked_scores([(0, 0, 3.0), (1, 0, 1.0), (2, 1, 2.0)])
        assert bucketed_select(scores, M=1, C=3) == [1]

    def test_cap_skips_greedy_cluster(self):
        # cluster 0 owns the four cheapest samples but cap = 2 admits only
        # two of them before the walk moves on
        pairs = [(0, 0, 0.1), (1, 0, 0.2), (2, 0, 0.3), (3, 0, 0.4), (4, 1, 5.0), (5, 2, 6.0)]
        scores = ranked_scores(pairs)
        assert bucketed_select(scores, M=3, C=3) == [0, 1, 4]

    def test_relaxation_preserves_earlier_admissions(self):
        # first walk admits 0,1 from cluster 0 and 4 from cluster 1, then the
        # raised cap extends the batch without reordering
        pairs = [(0, 0, 0.1), (1, 0, 0.2), (2, 0, 0.3), (3, 0, 0.4), (4, 1, 5.0)]
        scores = ranked_scores(pairs)
        assert bucketed_select(scores, M=4, C=4) == [0, 1, 4, 2]

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_walk_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 40))
        pairs = [
            (i, int(rng.integers(0, 5)), float(rng.uniform())) for i in range(n)
        ]
        scores = ranked_scores(pairs)
        ranked = [(s.sample_index, s.cluster_id) for s in scores]
        M = int(rng.integers(1, n + 1))
        C = int(rng.integers(1, 8))
        expected, cap = walk_admit(ranked, M, C)
        got = bucketed_select(scores, M, C)
        assert got == expected
        counts = {}
        for s in scores:
            if s.sample_index in got:
                counts[s.cluster_id] = counts.get(s.cluster_id, 0) + 1
        assert max(counts.values()) <= cap

    @given(
        clusters=st.lists(st.integers(0, 4), min_size=1, max_size=30),
        m_frac=st.floats(0.0, 1.0),
        C=st.integers(1, 8),
    )
    @settings(max_examples=60, deadline=None)
    def test_always_returns_m_distinct_scored_indices(self, clusters, m_frac, C):
        scores = ranked_scores(
            [(i, c, float(i % 7)) for i, c in enumerate(clusters)]
        )
        M = max(1, int(round(m_frac * len(clusters))))
        got = bucketed_select(scores, M, C)
        assert len(got) == M
        assert len(set(got)) == M
        assert set(got) <= {s.sample_index for s in scores}

    def test_diversity_bound_on_constructed_instance(self):
        # four clusters, each holding one cheap sample well above the cutoff;
        # the batch must draw from min(C, clusters, M) = 4 distinct clusters
        pairs = [(i, i, float(i) * 0.01) for i in range(4)]
        pairs += [(10 + i, i % 4, 100.0 + i) for i in range(20)]
        scores = ranked_scores(pairs)
        got = bucketed_select(scores, M=4, C=4)
        chosen_clusters = {c for i, c, _ in pairs if i in got}
        assert len(chosen_clusters) >= 4

    def test_validation(self):
        scores = ranked_scores([(0, 0, 1.0), (1, 1, 2.0)])
        with pytest.raises(ValueError, match="M must be"):
            bucketed_select(scores, M=0, C=2)
        with pytest.raises(ValueError, match="cannot select 3"):
            bucketed_select(scores, M=3, C=2)
        with pytest.raises(ValueError, match="C must be"):
            bucketed_select(scores, M=1, C=0)


class TestPipelineAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(8))
    def test_end_to_end_selection_is_exact(self, seed):
        probs, labels, unlabeled = random_instance(seed)
        rng = np.random.default_rng(seed + 1000)
        M = int(rng.integers(1, len(unlabeled) + 1))
        C = int(rng.integers(1, 7))

        oracle_scores = brute_force_scores(probs, labels, unlabeled)
        ranked = sorted(unlabeled, key=lambda j: (oracle_scores[j], j))
        expected, _ = walk_admit([(j, int(labels[j])) for j in ranked], M, C)

        got_scores = cluster_scores(
            make_distribution(probs), make_clusters(labels), unlabeled
        )
        assert bucketed_select(got_scores, M, C) == expected


class TestSelectionTrace:
    def test_trace_flags_admitted_samples(self):
        scores = ranked_scores([(0, 0, 0.5), (1, 1, 1.5), (2, 0, 2.5)])
        trace = selection_trace(scores, admitted=[0, 1])
        assert trace == [
            {"index": 0, "cluster": 0, "score": 0.5, "admitted": True},
            {"index": 1, "cluster": 1, "score": 1.5, "admitted": True},
            {"index": 2, "cluster": 0, "score": 2.5, "admitted": False},
        ]
