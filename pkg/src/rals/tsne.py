"""Exact t-SNE for desk-scale inputs.

O(N^2) throughout: per-row Gaussian bandwidths are calibrated by bisection so
each conditional distribution hits the target perplexity, the symmetrized
joint matrix is compared against a Student-t (1 degree of freedom) kernel in
the embedding, and momentum gradient descent with the usual adaptive
per-parameter gains minimizes the KL divergence. No Barnes-Hut or FFT
approximations; exactness is what makes the gradient testable against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
INIT_STD = 1e-4
PERPLEXITY_REL_TOL = 1e-5
MAX_BISECTION_STEPS = 200
MIN_GAIN = 0.01


class PerplexityCalibrationError(RuntimeError):
    """Bandwidth bisection failed to reach the target perplexity."""

    def __init__(self, row: int, achieved: float, target: float):
        self.row = row
        super().__init__(
            f"perplexity calibration failed for row {row}: reached {achieved:.6g} "
            f"after {MAX_BISECTION_STEPS} bisection steps (target {target:.6g})"
        )


class TsneDivergenceError(RuntimeError):
    """The KL objective or the embedding became non-finite."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"t-SNE diverged at iteration {iteration}: non-finite objective")


@dataclass(frozen=True)
class Embedding:
    """N x d embedded points with the recorded KL trajectory.

    ``kl_history`` holds (iteration, KL) pairs measured against the
    un-exaggerated joint probabilities; iteration 0 is the initial layout.
    """

    points: np.ndarray
    kl_history: tuple[tuple[int, float], ...]
    perplexity: float
    iterations: int
    seed: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.points)):
            raise ValueError("embedding contains non-finite coordinates")

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]

    @property
    def n_dims(self) -> int:
        return self.points.shape[1]


def _calibrated_bandwidths(sq_dists: np.ndarray, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-row precisions beta_i such that exp(entropy of row i) == perplexity.

    Returns (conditional row-stochastic matrix, beta). Bisection on beta with
    bracket doubling, all rows advanced in lockstep; converged rows drop out.
    Distances are shifted by each row's nearest-neighbor distance before
    exponentiation; the conditional probabilities are unchanged but the
    weights can no longer underflow en masse, which keeps the entropy a
    smooth function of beta at any distance scale.
    """
    n = sq_dists.shape[0]
    log_target = np.log(perplexity)

    d_all = np.array(sq_dists, dtype=np.float64)
    np.fill_diagonal(d_all, np.inf)  # self is never a neighbor
    shifted = d_all - d_all.min(axis=1)[:, None]
    finite = np.where(np.isfinite(shifted), shifted, 0.0)

    beta = np.ones(n)
    beta_lo = np.full(n, -np.inf)  # -inf means "no lower bracket yet"
    beta_hi = np.full(n, np.inf)
    probs = np.zeros_like(sq_dists)
    entropy = np.zeros(n)
    active = np.arange(n)

    for _ in range(MAX_BISECTION_STEPS):
        w = np.exp(-shifted[active] * beta[active, None])  # self weight exp(-inf) = 0
        sum_w = w.sum(axis=1)  # >= 1: the nearest neighbor's weight is exp(0)
        weighted_d = np.einsum("ij,ij->i", finite[active], w)
        h = np.log(sum_w) + beta[active] * weighted_d / sum_w

        probs[active] = w / sum_w[:, None]
        entropy[active] = h

        done = np.abs(np.expm1(h - log_target)) <= PERPLEXITY_REL_TOL
        if np.all(done):
            active = active[:0]
            break

        still = active[~done]
        hot = h[~done] > log_target  # entropy too high -> tighten the kernel
        idx_hot, idx_cold = still[hot], still[~hot]

        beta_lo[idx_hot] = beta[idx_hot]
        beta[idx_hot] = np.where(
            np.isinf(beta_hi[idx_hot]),
            beta[idx_hot] * 2.0,
            0.5 * (beta[idx_hot] + beta_hi[idx_hot]),
        )
        beta_hi[idx_cold] = beta[idx_cold]
        beta[idx_cold] = np.where(
            beta_lo[idx_cold] == -np.inf,
            beta[idx_cold] / 2.0,
            0.5 * (beta[idx_cold] + beta_lo[idx_cold]),
        )
        active = still
    else:
        row = int(active[0])
        raise PerplexityCalibrationError(row, float(np.exp(entropy[row])), perplexity)

    return probs, beta


def conditional_rows(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Row-stochastic conditional neighbor probabilities P_{j|i}.

    Each row's bandwidth is bisected so that exp(entropy) matches
    ``perplexity`` to within 1e-5 relative.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 < perplexity < n - 1:
        raise ValueError(f"perplexity must lie in (1, {n - 1}), got {perplexity}")
    sq_dists = squareform(pdist(X, "sqeuclidean"))
    probs, _ = _calibrated_bandwidths(sq_dists, perplexity)
    return probs


def conditional_probabilities(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized joint probabilities P_ij = (P_{j|i} + P_{i|j}) / (2N)."""
    cond = conditional_rows(X, perplexity)
    n = cond.shape[0]
    return (cond + cond.T) / (2.0 * n)


def _student_t_kernel(Y: np.ndarray) -> np.ndarray:
    """Unnormalized heavy-tailed similarities (1 + ||y_i - y_j||^2)^-1, zero diagonal."""
    norms = np.einsum("ij,ij->i", Y, Y)
    sq = norms[:, None] + norms[None, :] - 2.0 * (Y @ Y.T)
    np.maximum(sq, 0.0, out=sq)
    num = 1.0 / (1.0 + sq)
    np.fill_diagonal(num, 0.0)
    return num


def _kl(P: np.ndarray, num: np.ndarray) -> float:
    """KL(P || Q) with Q = num / sum(num); 0*log(0) = 0."""
    Q = num / num.sum()
    mask = P > 0
    ratio = np.ones_like(P)
    np.divide(P, Q, out=ratio, where=mask)
    return float(np.sum(P * np.log(ratio)))


def _gradient(Y: np.ndarray, P: np.ndarray, num: np.ndarray) -> np.ndarray:
    """dKL/dY for the Student-t kernel: 4 * sum_j (p-q) num (y_i - y_j)."""
    Q = num / num.sum()
    pq_num = (P - Q) * num
    return 4.0 * (pq_num.sum(axis=1)[:, None] * Y - pq_num @ Y)


def tsne_objective(Y: np.ndarray, P: np.ndarray) -> float:
    """KL(P || Q) of an embedding against a square joint probability matrix."""
    Y = np.asarray(Y, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    return _kl(P, _student_t_kernel(Y))


def tsne_gradient(Y: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`tsne_objective` w.r.t. the embedding."""
    Y = np.asarray(Y, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    return _gradient(Y, P, _student_t_kernel(Y))


def effective_perplexity(perplexity: float, n_samples: int) -> float:
    """Clip the requested perplexity to (n-1)/3 so small inputs stay calibratable."""
    return min(perplexity, (n_samples - 1) / 3.0)


def tsne(
    X: np.ndarray,
    d: int,
    perplexity: float = 30.0,
    iters: int = 500,
    seed: int = 0,
    learning_rate: float | None = None,
    dtype: str = "float64",
    record_every: int = 25,
) -> Embedding:
    """Embed rows of X into d dimensions by exact t-SNE gradient descent.

    Deterministic for a fixed seed: initialization is seeded Gaussian noise
    of standard deviation 1e-4, momentum is 0.5 for the first 250 iterations
    (during which the joint probabilities are exaggerated by 12) and 0.8
    afterwards. The learning rate defaults to max(N/12, 50). ``dtype``
    selects the working precision of the descent; probabilities are always
    calibrated in float64.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 5:
        raise ValueError(f"t-SNE needs at least 5 samples, got {n}")
    if d < 1:
        raise ValueError(f"embedding dimension must be >= 1, got {d}")
    if iters < EXAGGERATION_ITERS:
        raise ValueError(f"iters must be >= {EXAGGERATION_ITERS}, got {iters}")

    perp = effective_perplexity(perplexity, n)
    P = conditional_probabilities(X, perp)

    if learning_rate is None:
        learning_rate = max(n / 12.0, 50.0)
    work = np.dtype(dtype)

    rng = np.random.default_rng(seed)
    Y = rng.normal(scale=INIT_STD, size=(n, d)).astype(work)

    p_work = P.astype(work)
    p_exagg = p_work * work.type(EARLY_EXAGGERATION)
    lr = work.type(learning_rate)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)

    kl_history: list[tuple[int, float]] = []

    def record(iteration: int) -> None:
        kl = _kl(P, _student_t_kernel(np.asarray(Y, dtype=np.float64)))
        if not np.isfinite(kl):
            raise TsneDivergenceError(iteration)
        kl_history.append((iteration, kl))

    record(0)
    for t in range(1, iters + 1):
        exaggerating = t <= EXAGGERATION_ITERS
        momentum = MOMENTUM_EARLY if exaggerating else MOMENTUM_LATE

        num = _student_t_kernel(Y)
        grad = _gradient(Y, p_exagg if exaggerating else p_work, num)
        if not np.all(np.isfinite(grad)):
            raise TsneDivergenceError(t)

        flip = (update * grad) < 0
        gains[flip] += 0.2
        gains[~flip] *= 0.8
        np.clip(gains, MIN_GAIN, None, out=gains)
        update = momentum * update - lr * (gains * grad)
        Y = Y + update
        Y = Y - Y.mean(axis=0)

        if t == EXAGGERATION_ITERS or t == iters or t % record_every == 0:
            record(t)

    return Embedding(
        points=np.asarray(Y, dtype=np.float64),
        kl_history=tuple(kl_history),
        perplexity=perp,
        iterations=iters,
        seed=seed,
    )


def write_embedding_csv(embedding: Embedding, path) -> None:
    """Dump embedded coordinates as CSV for external plotting."""
    np.savetxt(path, embedding.points, delimiter=",", fmt="%.17g")
