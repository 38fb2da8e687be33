"""Query selection by local symmetric KL divergence.

Each unlabeled sample is scored by the average symmetric KL divergence
between its label distribution and every member of its own cluster; low
scores mark samples that are most representative of their neighborhood.
A bucketing pass then caps how many queries any one cluster may contribute,
so a single dense cluster cannot monopolize the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import LabelDistribution
from .kmeans import ClusterAssignment

SMOOTHING_EPS = 1e-12


@dataclass(frozen=True)
class SelectionScore:
    """One unlabeled sample's position in the selection ranking."""

    sample_index: int
    cluster_id: int
    score: float
    rank: int


def skl_divergence(p: np.ndarray, q: np.ndarray, eps: float = SMOOTHING_EPS) -> float:
    """Symmetric KL divergence between two discrete distributions.

    Both inputs are smoothed to (v + eps) / (1 + C*eps) so zero entries stay
    finite. The elementwise form (p-q)*(log p - log q) makes the result
    exactly symmetric in its arguments and non-negative term by term.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"distributions must be 1-D of equal length, got {p.shape} and {q.shape}")
    c = p.shape[0]
    ps = (p + eps) / (1.0 + c * eps)
    qs = (q + eps) / (1.0 + c * eps)
    return float(np.sum((ps - qs) * (np.log(ps) - np.log(qs))))


def cluster_scores(
    F: LabelDistribution,
    clusters: ClusterAssignment,
    unlabeled: Iterable[int],
) -> list[SelectionScore]:
    """Score every unlabeled sample by its local average SKL divergence.

    For sample j in cluster d, score(j) = (1/N(d)) * sum over all cluster
    members i (labeled or not, including j itself) of skl(F_j, F_i). The
    returned list is sorted ascending by score, ties broken by lower sample
    index, with ranks 0..len-1.

    The cluster sums are assembled once per cluster, so the whole scoring
    pass is O(N*C + N*k) instead of the quadratic double loop.
    """
    unlabeled_idx = np.asarray(sorted(set(int(i) for i in unlabeled)), dtype=np.int64)
    if unlabeled_idx.size == 0:
        raise ValueError("cannot score an empty unlabeled set")

    probs = F.probs
    labels = clusters.labels
    n, c = probs.shape
    if labels.shape[0] != n:
        raise ValueError(f"cluster assignment covers {labels.shape[0]} samples, expected {n}")
    if unlabeled_idx[0] < 0 or unlabeled_idx[-1] >= n:
        raise ValueError("unlabeled indices out of range")

    k = clusters.n_clusters
    A = (probs + SMOOTHING_EPS) / (1.0 + c * SMOOTHING_EPS)
    logA = np.log(A)
    row_al = np.einsum("ij,ij->i", A, logA)

    # Per-cluster column sums let the SKL sum over each cluster collapse to
    # four dot products per candidate.
    sizes = np.bincount(labels, minlength=k).astype(np.float64)
    col_a = np.vstack([np.bincount(labels, weights=A[:, kk], minlength=k) for kk in range(c)]).T
    col_log = np.vstack([np.bincount(labels, weights=logA[:, kk], minlength=k) for kk in range(c)]).T
    col_al = np.bincount(labels, weights=row_al, minlength=k)

    sub = unlabeled_idx
    lab = labels[sub]
    raw = (
        sizes[lab] * row_al[sub]
        - np.einsum("ij,ij->i", A[sub], col_log[lab])
        - np.einsum("ij,ij->i", logA[sub], col_a[lab])
        + col_al[lab]
    )
    scores = raw / sizes[lab]
    np.maximum(scores, 0.0, out=scores)  # guard against cancellation at ~1e-17

    order = np.lexsort((sub, scores))
    return [
        SelectionScore(
            sample_index=int(sub[o]),
            cluster_id=int(lab[o]),
            score=float(scores[o]),
            rank=rank,
        )
        for rank, o in enumerate(order)
    ]


def bucketed_select(scores: Sequence[SelectionScore], M: int, C: int) -> list[int]:
    """Pick M sample indices from the ranking under a per-cluster cap.

    The walk admits samples in rank order, skipping any whose cluster has
    already contributed cap = floor(M/C) + 1 samples. If a full walk admits
    fewer than M (the cap is infeasible for this cluster structure), the cap
    is raised by one and the walk restarts over not-yet-admitted samples,
    repeating until M are admitted. Admission order is preserved across
    relaxation rounds.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if M > len(scores):
        raise ValueError(f"cannot select {M} samples from {len(scores)} scored candidates")
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")

    cap = M // C + 1
    admitted: list[int] = []
    taken = set()
    counts: dict[int, int] = {}
    while len(admitted) < M:
        for s in scores:
            if s.sample_index in taken:
                continue
            if counts.get(s.cluster_id, 0) >= cap:
                continue
            admitted.append(s.sample_index)
            taken.add(s.sample_index)
            counts[s.cluster_id] = counts.get(s.cluster_id, 0) + 1
            if len(admitted) == M:
                break
        else:
            cap += 1
            continue
        break
    return admitted


def selection_trace(scores: Sequence[SelectionScore], admitted: Sequence[int]) -> list[dict]:
    """JSON-ready per-candidate trace: index, cluster, score, admitted flag."""
    chosen = set(admitted)
    return [
        {
            "index": s.sample_index,
            "cluster": s.cluster_id,
            "score": s.score,
            "admitted": s.sample_index in chosen,
        }
        for s in scores
    ]
