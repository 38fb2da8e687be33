"""Metrics, synthetic unbalanced data, and one-vs-rest assembly.

Evaluation is transductive by default: the model's label distribution is
scored on whatever is currently unlabeled. Accuracy comes in two flavors,
total (plain fraction correct) and average (unweighted mean of per-class
recalls, the number that moves when minority classes are ignored).
Precision-recall curves sweep a threshold over one class's probability
column with one point per distinct score, and AUC integrates them by
trapezoid over the recall axis.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .data import FeatureMatrix, LabelPool
from .graph import LabelDistribution

# Heartbeat class frequencies of the arrhythmia corpus this pipeline was
# designed around (N, A, V, RB, P, LB); used to shape synthetic benchmarks.
ECG_CLASS_RATIO = (12338, 344, 2194, 1982, 3498, 988)


@dataclass(frozen=True)
class PerClassMetrics:
    """Precision/recall of argmax predictions for one class, plus its PR-AUC."""

    class_id: int
    precision: float
    recall: float
    support: int
    auc: float


@dataclass(frozen=True)
class MetricSnapshot:
    """All evaluation output for one model state."""

    labeled_count: int
    n_evaluated: int
    total_accuracy: float
    average_accuracy: float
    per_class: tuple[PerClassMetrics, ...]
    pr_curves: tuple[tuple[tuple[float, float], ...], ...]

    @property
    def auc(self) -> tuple[float, ...]:
        return tuple(m.auc for m in self.per_class)

    def to_dict(self) -> dict:
        return {
            "labeled_count": self.labeled_count,
            "n_evaluated": self.n_evaluated,
            "total_accuracy": self.total_accuracy,
            "average_accuracy": self.average_accuracy,
            "per_class": [
                {
                    "class_id": m.class_id,
                    "precision": m.precision,
                    "recall": m.recall,
                    "support": m.support,
                    "auc": m.auc,
                }
                for m in self.per_class
            ],
        }


def pr_curve(scores: np.ndarray, positives: np.ndarray) -> tuple[tuple[float, float], ...]:
    """(recall, precision) points from sweeping "score >= threshold".

    One point per distinct score value, ordered by descending threshold, so
    recall is non-decreasing along the curve and the final point (threshold
    at the minimum score) always has recall 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValueError("scores and positives must be 1-D arrays of equal length")
    total_pos = int(positives.sum())
    if total_pos == 0:
        raise ValueError("PR curve needs at least one positive sample")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp_cum = np.cumsum(positives[order])
    # The last index of each run of equal scores is where that threshold's
    # prediction set is complete.
    boundaries = np.flatnonzero(np.diff(s) != 0)
    boundaries = np.append(boundaries, s.size - 1)
    return tuple(
        (float(tp_cum[b] / total_pos), float(tp_cum[b] / (b + 1)))
        for b in boundaries
    )


def pr_auc(curve: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under a PR curve over the recall axis.

    The curve is anchored at recall 0 with the precision of its highest
    threshold point, so a one-point curve at the base rate integrates to the
    base rate and a perfect curve to 1.
    """
    if len(curve) == 0:
        raise ValueError("cannot integrate an empty curve")
    points = [(0.0, curve[0][1])] + [(float(r), float(p)) for r, p in curve]
    area = 0.0
    for (r0, p0), (r1, p1) in zip(points, points[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return area


def evaluate(F: LabelDistribution, pool: LabelPool, eval_set: Iterable[int]) -> MetricSnapshot:
    """Score argmax predictions and per-class PR curves on an evaluation set.

    The evaluation set must be disjoint from the labeled pool. Classes with
    no samples in the evaluation set have undefined recall; they are dropped
    from the average accuracy with a warning and get an empty PR curve.
    """
    eval_idx = np.asarray(sorted(set(int(i) for i in eval_set)), dtype=np.int64)
    if eval_idx.size == 0:
        raise ValueError("evaluation set is empty")
    overlap = set(eval_idx.tolist()) & set(pool.labeled)
    if overlap:
        raise ValueError(f"evaluation set overlaps the labeled pool at {sorted(overlap)[:5]}")

    probs = F.probs[eval_idx]
    truth = pool.ground_truth[eval_idx]
    preds = probs.argmax(axis=1)
    n_eval = eval_idx.size
    c = pool.n_classes

    total_accuracy = float(int((preds == truth).sum()) / n_eval)

    per_class: list[PerClassMetrics] = []
    curves: list[tuple[tuple[float, float], ...]] = []
    recalls: list[float] = []
    missing: list[int] = []
    for cls in range(c):
        support = int((truth == cls).sum())
        predicted = int((preds == cls).sum())
        tp = int(((preds == cls) & (truth == cls)).sum())
        precision = tp / predicted if predicted > 0 else 0.0
        if support > 0:
            recall = tp / support
            curve = pr_curve(probs[:, cls], truth == cls)
            auc = pr_auc(curve)
            recalls.append(recall)
        else:
            recall = float("nan")
            curve = ()
            auc = float("nan")
            missing.append(cls)
        per_class.append(
            PerClassMetrics(class_id=cls, precision=float(precision), recall=float(recall), support=support, auc=float(auc))
        )
        curves.append(curve)

    if missing:
        warnings.warn(
            f"classes {missing} absent from the evaluation set; excluded from average accuracy",
            stacklevel=2,
        )
    average_accuracy = float(np.mean(recalls)) if recalls else float("nan")

    return MetricSnapshot(
        labeled_count=len(pool.labeled),
        n_evaluated=int(n_eval),
        total_accuracy=total_accuracy,
        average_accuracy=average_accuracy,
        per_class=tuple(per_class),
        pr_curves=tuple(curves),
    )


def scaled_class_sizes(ratio: Sequence[int], total: int) -> list[int]:
    """Scale integer class counts to a new total by largest remainder.

    Proportions are preserved within one sample; ties in fractional part go
    to the lower class id.
    """
    ratio = [int(r) for r in ratio]
    if total < len(ratio):
        raise ValueError(f"total {total} cannot cover {len(ratio)} classes")
    denom = sum(ratio)
    quotas = [r * total / denom for r in ratio]
    sizes = [int(q) for q in quotas]
    leftovers = sorted(range(len(ratio)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in leftovers[: total - sum(sizes)]:
        sizes[i] += 1
    return sizes


def generate_unbalanced(
    seed: int,
    class_sizes: Sequence[int],
    dims: int,
    separation: float,
) -> tuple[FeatureMatrix, LabelPool]:
    """Seeded Gaussian blobs with controlled class imbalance.

    Class means are drawn once and rescaled so their minimum pairwise
    distance is at least ``separation``; each class then contributes
    unit-covariance samples around its mean. Labels follow generation order
    (class 0 block first).
    """
    sizes = [int(s) for s in class_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least 2 classes")
    if any(s < 1 for s in sizes):
        raise ValueError("every class needs at least one sample")
    if dims < 1:
        raise ValueError(f"dims must be >= 1, got {dims}")
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")

    c = len(sizes)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    means = rng.normal(size=(c, dims))
    min_dist = float(pdist(means).min())
    while min_dist == 0.0:  # coincident draw; essentially impossible but cheap to guard
        means = rng.normal(size=(c, dims))
        min_dist = float(pdist(means).min())
    if min_dist < separation:
        means *= separation / min_dist

    labels = np.repeat(np.arange(c, dtype=np.int64), sizes)
    X = means[labels] + rng.standard_normal((labels.size, dims))
    return FeatureMatrix(X), LabelPool(ground_truth=labels, n_classes=c)


def make_one_vs_rest(pool: LabelPool, positive_class: int) -> LabelPool:
    """Collapse a pool to binary: the chosen class becomes 0, the rest 1.

    Ground truth, observed labels, and provenance are all remapped; the
    labeled set is preserved as-is.
    """
    if not 0 <= positive_class < pool.n_classes:
        raise ValueError(f"positive_class must lie in [0, {pool.n_classes}), got {positive_class}")
    if not np.any(pool.ground_truth == positive_class):
        raise ValueError(f"class {positive_class} has no samples")

    new_truth = np.where(pool.ground_truth == positive_class, 0, 1).astype(np.int64)
    names = None
    if pool.class_names is not None:
        names = (pool.class_names[positive_class], "rest")
    binary = LabelPool(ground_truth=new_truth, n_classes=2, class_names=names)
    for idx in pool.labeled:
        observed = pool.observed[idx]
        binary.add_label(idx, 0 if observed == positive_class else 1, pool.provenance[idx])
    return binary


def write_accuracy_curve_csv(path, rows: Iterable[tuple[int, float, float]]) -> None:
    """Curve file: labeled count against total and average accuracy."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["labeled_count", "total_accuracy", "average_accuracy"])
        for labeled, total, average in rows:
            writer.writerow([labeled, f"{total:.17g}", f"{average:.17g}"])


def write_pr_points_csv(path, snapshot: MetricSnapshot) -> None:
    """Curve file: per-class (recall, precision) points of one snapshot."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "recall", "precision"])
        for cls, curve in enumerate(snapshot.pr_curves):
            for recall, precision in curve:
                writer.writerow([cls, f"{recall:.17g}", f"{precision:.17g}"])


def write_tidy_metrics_csv(path, records: Iterable[tuple[str, int, int, MetricSnapshot]]) -> None:
    """Tidy metrics: one row per (strategy, seed, iteration, class)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "strategy",
                "seed",
                "iteration",
                "labeled_count",
                "class_id",
                "precision",
                "recall",
                "auc",
                "total_accuracy",
                "average_accuracy",
            ]
        )
        for strategy, seed, iteration, snap in records:
            for m in snap.per_class:
                writer.writerow(
                    [
                        strategy,
                        seed,
                        iteration,
                        snap.labeled_count,
                        m.class_id,
                        f"{m.precision:.17g}",
                        f"{m.recall:.17g}",
                        f"{m.auc:.17g}",
                        f"{snap.total_accuracy:.17g}",
                        f"{snap.average_accuracy:.17g}",
                    ]
                )
