"""Active-learning loop orchestration.

One loop skeleton drives three query strategies over a shared model state:

* ``rals``: spread labels, embed the label distributions, cluster the
  embedding, rank by local average SKL, diversify with bucketing, gate with
  BVSB.
* ``us``: maximum-entropy uncertainty sampling over the same spread model.
* ``random``: seeded uniform sampling, the control baseline.

The loop runs while m <= (budget - initial) / batch, shrinking the final
batch if the unlabeled set runs short. ``ActiveLearningLoop`` exposes a
propose/commit split so an external annotator (the labeling service) can sit
between query selection and pool update; the in-process runners wire a
callable oracle into the same path, which is what makes service-driven and
in-process runs bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import json

import numpy as np

from .data import FeatureMatrix, LabelPool, PROVENANCE_INITIAL, RalsConfig
from .evaluation import MetricSnapshot, evaluate
from .graph import LabelDistribution, rbf_affinity, spread_labels
from .kmeans import ClusterAssignment, kmeans
from .noise import Oracle, QueryBatch, bvsb_ratio, filter_batch
from .selection import bucketed_select, cluster_scores
from .tsne import Embedding, tsne

STRATEGIES = ("rals", "us", "random")

# Purpose tags keep per-iteration random streams independent.
_TAG_INIT = 0
_TAG_TSNE = 1
_TAG_KMEANS = 2
_TAG_RANDOM = 3
_TAG_HOLDOUT = 4


def _subseed(seed: int, iteration: int, tag: int) -> int:
    return int(np.random.SeedSequence((seed, iteration, tag)).generate_state(1)[0])


@dataclass(frozen=True)
class PendingQuery:
    """One proposed sample with the model context an annotator sees."""

    sample_index: int
    cluster_id: int
    skl_score: float
    bvsb_ratio: float
    best_class: int
    second_class: int
    f_row: tuple[float, ...]


@dataclass(frozen=True)
class LoopState:
    """Snapshot of the loop after one full pass (iteration 0 = initial fit)."""

    iteration: int
    labeled_indices: tuple[int, ...]
    F: LabelDistribution
    embedding: Optional[Embedding]
    clusters: Optional[ClusterAssignment]
    batch: Optional[QueryBatch]
    metrics: Optional[MetricSnapshot]
    mean_max_prob: float

    @property
    def labeled_count(self) -> int:
        return len(self.labeled_indices)

    @property
    def accepted_count(self) -> int:
        return self.batch.accepted_count if self.batch is not None else 0


@dataclass(frozen=True)
class RunHistory:
    """Ordered snapshots of one strategy run plus the config that produced it."""

    strategy: str
    config: RalsConfig
    snapshots: tuple[LoopState, ...]

    @property
    def initial(self) -> LoopState:
        return self.snapshots[0]

    @property
    def final(self) -> LoopState:
        return self.snapshots[-1]

    @property
    def total_accepted(self) -> int:
        return sum(s.accepted_count for s in self.snapshots)

    def at_labeled_count(self, count: int) -> Optional[LoopState]:
        """The first snapshot whose labeled pool reached the given size."""
        for s in self.snapshots:
            if s.labeled_count >= count:
                return s
        return None

    def to_jsonl_lines(self) -> list[str]:
        lines = []
        for s in self.snapshots:
            record = {
                "iteration": s.iteration,
                "labeled_count": s.labeled_count,
                "accepted": s.accepted_count,
                "mean_max_prob": s.mean_max_prob,
                "total_accuracy": s.metrics.total_accuracy if s.metrics else None,
                "average_accuracy": s.metrics.average_accuracy if s.metrics else None,
                "per_class": [
                    {"class_id": m.class_id, "precision": m.precision, "recall": m.recall, "auc": m.auc}
                    for m in s.metrics.per_class
                ]
                if s.metrics
                else [],
                "batch": s.batch.to_dicts() if s.batch is not None else [],
            }
            lines.append(json.dumps(record, allow_nan=True))
        return lines


def draw_initial_labels(pool: LabelPool, count: int, seed: int) -> None:
    """Label a seeded uniform sample with ground truth (provenance initial).

    If the draw happens to land in a single class, its last pick is swapped
    for the first differently-classed sample in the permutation, so the
    spreading precondition (two classes present) always holds.
    """
    n = pool.ground_truth.shape[0]
    if not 2 <= count <= n:
        raise ValueError(f"initial label count must lie in [2, {n}], got {count}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0, _TAG_INIT)))
    perm = rng.permutation(n)
    chosen = list(perm[:count])
    classes = {int(pool.ground_truth[i]) for i in chosen}
    if len(classes) < 2:
        only = classes.pop()
        for candidate in perm[count:]:
            if int(pool.ground_truth[candidate]) != only:
                chosen[-1] = candidate
                break
        else:
            raise ValueError("ground truth holds a single class; cannot seed two classes")
    for idx in chosen:
        pool.add_label(int(idx), int(pool.ground_truth[idx]), PROVENANCE_INITIAL)


class ActiveLearningLoop:
    """Stepwise active-learning loop over a fixed feature matrix.

    The affinity graph is built once (features never change); label
    spreading, embedding, and clustering rerun from scratch each iteration.
    ``propose()`` computes and caches the next query batch; ``commit()``
    applies annotator answers (or self-estimated labels), refits, and
    snapshots. ``step()``/``run()`` wire both to a callable oracle.
    """

    def __init__(
        self,
        features: FeatureMatrix,
        pool: LabelPool,
        config: RalsConfig,
        strategy: str = "rals",
    ):
        if strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
        config.validate()
        if features.n_samples != pool.ground_truth.shape[0]:
            raise ValueError("features and pool disagree on sample count")
        if len(pool.labeled) < 2:
            raise ValueError("initial pool must contain at least 2 labeled samples")
        if config.label_budget < len(pool.labeled):
            raise ValueError(
                f"label_budget {config.label_budget} is below the initial labeled count {len(pool.labeled)}"
            )

        self.features = features
        self.pool = pool.copy()
        self.config = config
        self.strategy = strategy
        self.initial_labeled = len(pool.labeled)
        self.m = 1
        self.holdout = self._draw_holdout()
        self.graph = rbf_affinity(features, config.gamma, knn=config.knn_graph)
        self.F = self._refit()
        self._pending: Optional[dict] = None
        self.snapshots: list[LoopState] = [self._snapshot(0, None, None, None)]

    def _draw_holdout(self) -> np.ndarray:
        """Seeded fixed evaluation split, never queried; empty when transductive."""
        if self.config.holdout_fraction == 0.0:
            return np.empty(0, dtype=np.int64)
        candidates = self.pool.unlabeled_indices()
        n_hold = int(round(self.config.holdout_fraction * self.features.n_samples))
        if n_hold < 1 or n_hold >= candidates.size:
            raise ValueError(
                f"holdout_fraction {self.config.holdout_fraction} leaves no queryable samples"
            )
        rng = np.random.default_rng(
            np.random.SeedSequence((self.config.seed, 0, _TAG_HOLDOUT))
        )
        return np.sort(rng.permutation(candidates)[:n_hold])

    def _queryable(self) -> np.ndarray:
        unlabeled = self.pool.unlabeled_indices()
        if self.holdout.size == 0:
            return unlabeled
        return np.setdiff1d(unlabeled, self.holdout, assume_unique=True)

    def _refit(self) -> LabelDistribution:
        return spread_labels(
            self.graph,
            self.pool,
            self.config.alpha,
            tol=self.config.spreading_tol,
            max_iter=self.config.spreading_max_iter,
        )

    def _snapshot(
        self,
        iteration: int,
        embedding: Optional[Embedding],
        clusters: Optional[ClusterAssignment],
        batch: Optional[QueryBatch],
    ) -> LoopState:
        eval_set = self.holdout if self.holdout.size > 0 else self.pool.unlabeled_indices()
        if eval_set.size > 0:
            metrics = evaluate(self.F, self.pool, eval_set)
            mean_max = float(self.F.probs[eval_set].max(axis=1).mean())
        else:
            metrics = None
            mean_max = float("nan")
        return LoopState(
            iteration=iteration,
            labeled_indices=tuple(self.pool.labeled),
            F=self.F,
            embedding=embedding,
            clusters=clusters,
            batch=batch,
            metrics=metrics,
            mean_max_prob=mean_max,
        )

    def can_continue(self) -> bool:
        within_budget = self.m * self.config.batch_size <= self.config.label_budget - self.initial_labeled
        return within_budget and self._queryable().size > 0

    def propose(self) -> list[PendingQuery]:
        """Compute (and cache) the next query batch; stable until committed."""
        if self._pending is not None:
            return self._pending["queries"]
        if not self.can_continue():
            raise RuntimeError("loop budget exhausted; nothing to propose")

        unlabeled = self._queryable()
        batch_m = min(self.config.batch_size, int(unlabeled.size))
        embedding = clusters = None
        cluster_of: dict[int, int] = {}
        score_of: dict[int, float] = {}

        if self.strategy == "rals":
            source = self.F.probs if self.config.embed_source == "label-distribution" else self.features.values
            embedding = tsne(
                source,
                d=self.config.embed_dim,
                perplexity=self.config.perplexity,
                iters=self.config.tsne_iters,
                seed=_subseed(self.config.seed, self.m, _TAG_TSNE),
                dtype=self.config.tsne_dtype,
            )
            k = self.config.kmeans_k or self.pool.n_classes
            clusters = kmeans(
                embedding.points,
                k,
                seed=_subseed(self.config.seed, self.m, _TAG_KMEANS),
                max_iter=self.config.kmeans_max_iter,
                restarts=self.config.kmeans_restarts,
            )
            scores = cluster_scores(self.F, clusters, unlabeled)
            cluster_of = {s.sample_index: s.cluster_id for s in scores}
            score_of = {s.sample_index: s.score for s in scores}
            selected = bucketed_select(scores, batch_m, clusters.n_clusters)
        elif self.strategy == "us":
            p = self.F.probs[unlabeled]
            h = -np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0).sum(axis=1)
            order = np.lexsort((unlabeled, -h))
            selected = [int(unlabeled[o]) for o in order[:batch_m]]
        else:
            rng = np.random.default_rng(
                np.random.SeedSequence((self.config.seed, self.m, _TAG_RANDOM))
            )
            selected = [int(i) for i in rng.choice(unlabeled, size=batch_m, replace=False)]

        queries = []
        for idx in selected:
            ratio, c_a, c_b = bvsb_ratio(self.F.probs[idx])
            queries.append(
                PendingQuery(
                    sample_index=idx,
                    cluster_id=cluster_of.get(idx, -1),
                    skl_score=score_of.get(idx, float("nan")),
                    bvsb_ratio=ratio,
                    best_class=c_a,
                    second_class=c_b,
                    f_row=tuple(float(v) for v in self.F.probs[idx]),
                )
            )
        self._pending = {
            "selected": selected,
            "queries": queries,
            "embedding": embedding,
            "clusters": clusters,
            "cluster_of": cluster_of,
            "score_of": score_of,
        }
        return queries

    def commit(self, answers: Optional[Mapping[int, Optional[int]]] = None) -> LoopState:
        """Gate the pending batch, update the pool, refit, and snapshot.

        ``answers`` maps sample index to an annotator's class id (None to
        abstain) and is required whenever labels come from an oracle; the
        self-estimated RALS mode ignores it.
        """
        if self._pending is None:
            raise RuntimeError("commit() without a pending propose()")
        pending = self._pending

        mode = self.config.label_mode if self.strategy == "rals" else "oracle"
        gate = self.config.gate_oracle_labels if self.strategy == "rals" else False
        if mode == "oracle":
            if answers is None:
                raise ValueError("oracle-mode commit requires answers")
            lookup: Optional[Oracle] = lambda idx: answers.get(idx)
        else:
            lookup = None

        batch = filter_batch(
            pending["selected"],
            self.F,
            self.config.delta,
            mode,
            oracle=lookup,
            cluster_ids=pending["cluster_of"],
            skl_scores=pending["score_of"],
            gate_oracle_labels=gate,
        )
        for cand in batch.accepted:
            self.pool.add_label(cand.sample_index, cand.assigned_label, cand.label_source)

        self.F = self._refit()
        state = self._snapshot(self.m, pending["embedding"], pending["clusters"], batch)
        self.snapshots.append(state)
        self.m += 1
        self._pending = None
        return state

    def step(self, oracle: Optional[Oracle] = None) -> LoopState:
        """propose() + commit() with answers drawn from a callable oracle."""
        queries = self.propose()
        mode = self.config.label_mode if self.strategy == "rals" else "oracle"
        answers = None
        if mode == "oracle":
            if oracle is None:
                raise ValueError("oracle mode requires a label provider")
            answers = {q.sample_index: oracle(q.sample_index) for q in queries}
        return self.commit(answers)

    def run(self, oracle: Optional[Oracle] = None) -> RunHistory:
        while self.can_continue():
            self.step(oracle)
        return RunHistory(strategy=self.strategy, config=self.config, snapshots=tuple(self.snapshots))


def run_rals(
    features: FeatureMatrix,
    pool: LabelPool,
    config: RalsConfig,
    oracle: Optional[Oracle] = None,
) -> RunHistory:
    """Run the full pipeline to the budget; see ActiveLearningLoop."""
    return ActiveLearningLoop(features, pool, config, "rals").run(oracle)


def run_uncertainty_sampling(
    features: FeatureMatrix,
    pool: LabelPool,
    config: RalsConfig,
    oracle: Oracle,
) -> RunHistory:
    """Maximum-entropy baseline under the same loop and oracle."""
    return ActiveLearningLoop(features, pool, config, "us").run(oracle)


def run_random_sampling(
    features: FeatureMatrix,
    pool: LabelPool,
    config: RalsConfig,
    oracle: Oracle,
    seed: Optional[int] = None,
) -> RunHistory:
    """Uniform random baseline; ``seed`` overrides the config seed if given."""
    if seed is not None:
        config = replace(config, seed=seed)
    return ActiveLearningLoop(features, pool, config, "random").run(oracle)
