"""RBF affinity graph construction and label spreading.

The spreading iteration is the classic symmetric-normalization scheme:
F(t+1) = alpha * S @ F(t) + (1 - alpha) * Y with S = D^{-1/2} W D^{-1/2},
Y one-hot on labeled rows and zero elsewhere, started from F(0) = Y. For
alpha in (0, 1) this is a contraction with fixed point
(1 - alpha) (I - alpha S)^{-1} Y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import FeatureMatrix, LabelPool

DEGREE_FLOOR = 1e-300
ROW_SUM_FLOOR = 1e-300


class DegenerateGraphError(ValueError):
    """An affinity row is numerically zero: the sample is isolated."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(
            f"sample {index} is isolated: all affinities below {DEGREE_FLOOR:g}; "
            "increase gamma or check for outlier features"
        )


@dataclass(frozen=True)
class AffinityGraph:
    """Symmetric RBF weights W (zero diagonal) and S = D^{-1/2} W D^{-1/2}."""

    weights: np.ndarray
    normalized: np.ndarray
    degrees: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LabelDistribution:
    """Per-sample per-class probabilities from label spreading.

    ``probs`` rows are normalized to sum 1 (rows whose raw scores underflow
    entirely fall back to uniform); ``raw`` keeps the pre-normalization
    scores. ``residuals`` is the max-abs change per iteration, for
    convergence diagnostics.
    """

    probs: np.ndarray
    raw: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    residuals: tuple[float, ...]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def predictions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)


def rbf_affinity(features: FeatureMatrix, gamma: float, knn: int | None = None) -> AffinityGraph:
    """Dense RBF affinity W_ij = exp(-gamma * ||x_i - x_j||^2), zero diagonal.

    ``knn`` optionally sparsifies the graph to the union of each sample's k
    nearest neighbors (kept symmetric); the default is the full dense kernel.
    Raises :class:`DegenerateGraphError` if any sample ends up isolated.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    X = features.values
    n = features.n_samples
    if n < 2:
        raise ValueError("affinity graph needs at least 2 samples")

    sq_dists = squareform(pdist(X, "sqeuclidean"))
    weights = np.exp(-gamma * sq_dists)
    np.fill_diagonal(weights, 0.0)

    if knn is not None:
        if knn >= n:
            raise ValueError(f"knn={knn} must be smaller than n_samples={n}")
        # Keep edge (i, j) when j is among i's k nearest or vice versa.
        order = np.argsort(sq_dists + np.diag(np.full(n, np.inf)), axis=1)
        keep = np.zeros_like(weights, dtype=bool)
        rows = np.repeat(np.arange(n), knn)
        keep[rows, order[:, :knn].ravel()] = True
        keep |= keep.T
        weights = np.where(keep, weights, 0.0)

    degrees = weights.sum(axis=1)
    if np.any(degrees < DEGREE_FLOOR):
        raise DegenerateGraphError(int(np.argmin(degrees)))

    inv_sqrt = 1.0 / np.sqrt(degrees)
    normalized = weights * inv_sqrt[:, None] * inv_sqrt[None, :]
    return AffinityGraph(weights=weights, normalized=normalized, degrees=degrees)


def _one_hot_labels(pool: LabelPool) -> np.ndarray:
    y = np.zeros((pool.n_samples, pool.n_classes), dtype=np.float64)
    if pool.n_labeled:
        y[pool.labeled_indices(), pool.observed_labels()] = 1.0
    return y


def spread_labels(
    graph: AffinityGraph,
    pool: LabelPool,
    alpha: float,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> LabelDistribution:
    """Iterate F(t+1) = alpha*S@F(t) + (1-alpha)*Y until the max-abs change
    drops below ``tol`` or ``max_iter`` is reached (the result is returned
    either way, flagged via ``converged``). Rows are normalized to
    probabilities afterwards.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if pool.n_labeled == 0:
        raise ValueError("labeled set is empty")
    if np.unique(pool.observed_labels()).size < 2:
        raise ValueError("labeled set must cover at least 2 distinct classes")
    if pool.n_samples != graph.n_samples:
        raise ValueError("pool and graph disagree on sample count")

    S = graph.normalized
    Y = _one_hot_labels(pool)
    base = (1.0 - alpha) * Y

    F = Y.copy()
    residuals: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        F_next = alpha * (S @ F) + base
        residual = float(np.max(np.abs(F_next - F)))
        residuals.append(residual)
        F = F_next
        if residual < tol:
            converged = True
            break

    raw = F
    row_sums = raw.sum(axis=1)
    degenerate = row_sums < ROW_SUM_FLOOR
    probs = np.where(
        degenerate[:, None],
        1.0 / raw.shape[1],
        raw / np.where(degenerate, 1.0, row_sums)[:, None],
    )
    return LabelDistribution(
        probs=probs,
        raw=raw,
        iterations=iterations,
        final_residual=residuals[-1],
        converged=converged,
        residuals=tuple(residuals),
    )


def write_distribution_csv(dist: LabelDistribution, path) -> None:
    """Dump the probability matrix as CSV at 17 significant digits."""
    np.savetxt(path, dist.probs, delimiter=",", fmt="%.17g")
