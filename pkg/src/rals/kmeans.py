"""Seeded k-means over embedded points.

Plain Lloyd iterations with k-means++ initialization, run to an assignment
fixpoint. Every source of randomness flows from an explicit seed, ties in
the assignment step go to the lowest cluster id, and empty clusters are
repaired by reseeding them at the point currently farthest from its own
centroid, so repeated runs agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class ClusterAssignment:
    """Result of one k-means fit: per-point labels plus the fitted centroids."""

    labels: np.ndarray
    centroids: np.ndarray
    sizes: tuple[int, ...]
    inertia: float
    iterations: int
    converged: bool

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    def members(self, cluster: int) -> np.ndarray:
        """Indices of points assigned to the given cluster."""
        return np.flatnonzero(self.labels == cluster)


def plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, the rest D^2-weighted."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)  # all remaining mass sits on chosen centers
        centers[c] = points[idx]
        np.minimum(closest, ((points - centers[c]) ** 2).sum(axis=1), out=closest)
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, float, int, bool]:
    n, k = points.shape[0], centers.shape[0]
    dims = points.shape[1]
    labels = np.full(n, -1, dtype=np.int64)
    converged = False
    iteration = 0

    prev_inertia = np.inf
    for iteration in range(1, max_iter + 1):
        d2 = cdist(points, centers, "sqeuclidean")
        new_labels = d2.argmin(axis=1).astype(np.int64)  # argmin takes the lowest id on ties
        point_d2 = d2[np.arange(n), new_labels]

        stolen = np.zeros(n, dtype=bool)
        while True:
            counts = np.bincount(new_labels, minlength=k)
            empties = np.flatnonzero(counts == 0)
            if empties.size == 0 or stolen.all():
                break
            j = int(empties[0])
            far = int(np.where(stolen, -1.0, point_d2).argmax())
            centers[j] = points[far]
            new_labels[far] = j
            point_d2[far] = 0.0
            stolen[far] = True

        step_inertia = float(point_d2.sum())
        assert step_inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12, "Lloyd step raised inertia"
        prev_inertia = step_inertia

        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels

        counts = np.bincount(labels, minlength=k).astype(np.float64)
        centers = np.vstack(
            [np.bincount(labels, weights=points[:, dim], minlength=k) for dim in range(dims)]
        ).T / counts[:, None]

    centers = np.vstack(
        [np.bincount(labels, weights=points[:, dim], minlength=len(centers)) for dim in range(dims)]
    ).T / np.bincount(labels, minlength=len(centers)).astype(np.float64)[:, None]
    inertia = float(cdist(points, centers, "sqeuclidean").min(axis=1).sum())
    return labels, centers, inertia, iteration, converged


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    restarts: int = 5,
) -> ClusterAssignment:
    """Cluster rows of ``points`` into k groups, keeping the best of several restarts.

    Restart r draws its initialization from ``SeedSequence((seed, r))``; the
    fit with the lowest inertia wins, earlier restarts winning ties.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-D, got shape {points.shape}")
    n = points.shape[0]
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k must be <= {n} points, got {k}")
    distinct = np.unique(points, axis=0).shape[0]
    if k > distinct:
        raise ValueError(f"k exceeds the {distinct} distinct points")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")

    best: ClusterAssignment | None = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        centers = plus_plus_init(points, k, rng)
        labels, centroids, inertia, iterations, converged = _lloyd(points, centers, max_iter)
        candidate = ClusterAssignment(
            labels=labels,
            centroids=centroids,
            sizes=tuple(int(c) for c in np.bincount(labels, minlength=k)),
            inertia=inertia,
            iterations=iterations,
            converged=converged,
        )
        if best is None or candidate.inertia < best.inertia:
            best = candidate
    assert best is not None
    return best
