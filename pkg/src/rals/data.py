"""Dataset containers, CSV ingestion and feature normalization.

Everything downstream (graph construction, spreading, selection) consumes the
two containers defined here: an immutable feature matrix and a label pool that
tracks which samples are labeled, by whom, and with what label.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROVENANCE_INITIAL = "initial"
PROVENANCE_ORACLE = "oracle"
PROVENANCE_SELF = "self-estimated"

LABEL_MODES = ("self-estimated", "oracle")
EMBED_SOURCES = ("label-distribution", "raw-features")


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D design matrix; rows are samples, columns are features.

    Immutable after construction and safe to share across workers. Entries
    must be finite; normalization is a separate, explicit step.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"feature matrix must be non-empty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
            raise ValueError(f"non-finite feature value in row {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class LabelPool:
    """Ground-truth labels plus the evolving labeled set.

    ``ground_truth`` holds the true class of every sample (used by simulated
    oracles and by evaluation). ``observed`` holds the label under which a
    sample entered the labeled set, which may differ from ground truth when
    the annotator is noisy or the label is the model's own estimate.

    The labeled set only grows; indices are unique and kept in insertion
    order so runs replay deterministically.
    """

    ground_truth: np.ndarray
    n_classes: int
    class_names: tuple[str, ...] | None = None
    labeled: list[int] = field(default_factory=list)
    observed: dict[int, int] = field(default_factory=dict)
    provenance: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        truth = np.asarray(self.ground_truth, dtype=np.int64)
        if truth.ndim != 1:
            raise ValueError("ground_truth must be 1-D")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if truth.size and (truth.min() < 0 or truth.max() >= self.n_classes):
            raise ValueError("ground-truth class id outside [0, n_classes)")
        self.ground_truth = truth
        self._labeled_set = set(self.labeled)

    @property
    def n_samples(self) -> int:
        return int(self.ground_truth.shape[0])

    @property
    def n_labeled(self) -> int:
        return len(self.labeled)

    def is_labeled(self, index: int) -> bool:
        return index in self._labeled_set

    def labeled_indices(self) -> np.ndarray:
        return np.asarray(self.labeled, dtype=np.int64)

    def unlabeled_indices(self) -> np.ndarray:
        mask = np.ones(self.n_samples, dtype=bool)
        if self.labeled:
            mask[self.labeled_indices()] = False
        return np.flatnonzero(mask)

    def add_label(self, index: int, label: int, provenance: str) -> None:
        index = int(index)
        label = int(label)
        if not 0 <= index < self.n_samples:
            raise ValueError(f"sample index {index} outside [0, {self.n_samples})")
        if not 0 <= label < self.n_classes:
            raise ValueError(f"class id {label} outside [0, {self.n_classes})")
        if index in self._labeled_set:
            raise ValueError(f"sample {index} is already labeled")
        if provenance not in (PROVENANCE_INITIAL, PROVENANCE_ORACLE, PROVENANCE_SELF):
            raise ValueError(f"unknown provenance {provenance!r}")
        self.labeled.append(index)
        self._labeled_set.add(index)
        self.observed[index] = label
        self.provenance[index] = provenance

    def observed_labels(self) -> np.ndarray:
        """Labels of the labeled set, aligned with ``labeled_indices()``."""
        return np.asarray([self.observed[i] for i in self.labeled], dtype=np.int64)

    def copy(self) -> "LabelPool":
        return LabelPool(
            ground_truth=self.ground_truth.copy(),
            n_classes=self.n_classes,
            class_names=self.class_names,
            labeled=list(self.labeled),
            observed=dict(self.observed),
            provenance=dict(self.provenance),
        )


@dataclass
class RalsConfig:
    """Hyperparameters for one active-learning run.

    Defaults follow the reference protocol: RBF width 0.25, spreading weight
    0.2, batch of 100 queries per iteration, confidence threshold 100 and a
    6-dimensional embedding.
    """

    gamma: float = 0.25
    alpha: float = 0.2
    batch_size: int = 100
    delta: float = 100.0
    embed_dim: int = 6
    embed_source: str = "label-distribution"
    perplexity: float = 30.0
    kmeans_k: int | None = None  # None -> number of classes
    label_budget: int = 175
    seed: int = 0
    label_mode: str = "self-estimated"
    gate_oracle_labels: bool = False
    spreading_tol: float = 1e-6
    spreading_max_iter: int = 1000
    tsne_iters: int = 500
    tsne_dtype: str = "float64"
    kmeans_max_iter: int = 300
    kmeans_restarts: int = 5
    knn_graph: int | None = None  # optional affinity sparsification, off by default
    holdout_fraction: float = 0.0  # 0 -> transductive evaluation on the unlabeled set

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.delta > 1:
            raise ValueError(f"delta must be > 1, got {self.delta}")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.embed_source not in EMBED_SOURCES:
            raise ValueError(f"embed_source must be one of {EMBED_SOURCES}, got {self.embed_source!r}")
        if not self.perplexity > 1:
            raise ValueError(f"perplexity must be > 1, got {self.perplexity}")
        if self.kmeans_k is not None and self.kmeans_k < 2:
            raise ValueError(f"kmeans_k must be >= 2, got {self.kmeans_k}")
        if self.label_budget < 0:
            raise ValueError(f"label_budget must be >= 0, got {self.label_budget}")
        if self.label_mode not in LABEL_MODES:
            raise ValueError(f"label_mode must be one of {LABEL_MODES}, got {self.label_mode!r}")
        if self.tsne_dtype not in ("float64", "float32"):
            raise ValueError(f"tsne_dtype must be float64 or float32, got {self.tsne_dtype!r}")
        if self.spreading_tol <= 0 or self.spreading_max_iter < 1:
            raise ValueError("spreading_tol must be > 0 and spreading_max_iter >= 1")
        if self.tsne_iters < 250:
            raise ValueError(f"tsne_iters must be >= 250, got {self.tsne_iters}")
        if self.kmeans_max_iter < 1 or self.kmeans_restarts < 1:
            raise ValueError("kmeans_max_iter and kmeans_restarts must be >= 1")
        if self.knn_graph is not None and self.knn_graph < 1:
            raise ValueError(f"knn_graph must be >= 1 when set, got {self.knn_graph}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError(f"holdout_fraction must lie in [0, 1), got {self.holdout_fraction}")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "alpha": self.alpha,
            "batch_size": self.batch_size,
            "delta": self.delta,
            "embed_dim": self.embed_dim,
            "embed_source": self.embed_source,
            "perplexity": self.perplexity,
            "kmeans_k": self.kmeans_k,
            "label_budget": self.label_budget,
            "seed": self.seed,
            "label_mode": self.label_mode,
            "gate_oracle_labels": self.gate_oracle_labels,
            "spreading_tol": self.spreading_tol,
            "spreading_max_iter": self.spreading_max_iter,
            "tsne_iters": self.tsne_iters,
            "tsne_dtype": self.tsne_dtype,
            "kmeans_max_iter": self.kmeans_max_iter,
            "kmeans_restarts": self.kmeans_restarts,
            "knn_graph": self.knn_graph,
            "holdout_fraction": self.holdout_fraction,
        }


def load_csv(path: str | Path, label_column: str) -> tuple[FeatureMatrix, LabelPool]:
    """Parse a UTF-8 CSV with a header row into features and a label pool.

    All columns except ``label_column`` must be numeric. Label values (string
    or integer) are mapped to dense class ids in first-occurrence order; the
    original values are kept on the pool as ``class_names``. The labeled set
    starts empty.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        n_cols = len(header)

        rows: list[list[float]] = []
        label_ids: list[int] = []
        class_to_id: dict[str, int] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise ValueError(
                    f"{path}: ragged row at line {line_no}: expected {n_cols} fields, got {len(row)}"
                )
            raw_label = row[label_idx].strip()
            if raw_label not in class_to_id:
                class_to_id[raw_label] = len(class_to_id)
            label_ids.append(class_to_id[raw_label])
            feats = []
            for col, cell in enumerate(row):
                if col == label_idx:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric feature {cell!r} at line {line_no}, "
                        f"column {header[col]!r}"
                    ) from None
            rows.append(feats)

    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len(class_to_id) < 2:
        raise ValueError(f"{path}: need at least 2 classes, found {len(class_to_id)}")

    features = FeatureMatrix(np.asarray(rows, dtype=np.float64))
    pool = LabelPool(
        ground_truth=np.asarray(label_ids, dtype=np.int64),
        n_classes=len(class_to_id),
        class_names=tuple(class_to_id),
    )
    return features, pool


def z_normalize(features: FeatureMatrix) -> FeatureMatrix:
    """Column-wise (x - mean) / std with the population (1/N) deviation.

    Constant columns become all-zero rather than being dropped, so column
    indices stay stable for reporting.
    """
    if features.n_samples < 2:
        raise ValueError("z-normalization needs at least 2 samples")
    values = features.values
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # population convention
    centered = values - mean
    out = np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)
    return FeatureMatrix(out)
