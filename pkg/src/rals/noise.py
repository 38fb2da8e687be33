"""Best-versus-second-best confidence gate and simulated oracles.

A selected candidate enters the labeled pool only if its label source
clears the BVSB test: the ratio between the largest and second-largest
entries of its label distribution must exceed a threshold delta. In
self-estimated mode the model labels its own confident picks; in oracle
mode an external annotator supplies labels (optionally still gated), and
the ratio is recorded either way. Rejected candidates simply return to the
unlabeled set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .data import LABEL_MODES, PROVENANCE_ORACLE, PROVENANCE_SELF
from .graph import LabelDistribution

RATIO_FLOOR = 1e-300

# A simulated annotator answers with a class id or None to abstain.
Oracle = Callable[[int], Optional[int]]


def bvsb_ratio(row: np.ndarray) -> tuple[float, int, int]:
    """Ratio of the best to second-best class probability of one row.

    Returns (ratio, best class, second class); ties go to the lower class
    id, and the denominator is floored at 1e-300 so one-hot rows yield a
    large finite ratio instead of dividing by zero.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] < 2:
        raise ValueError(f"row must be a 1-D distribution over >= 2 classes, got shape {row.shape}")
    c_a = int(np.argmax(row))
    masked = row.copy()
    masked[c_a] = -np.inf
    c_b = int(np.argmax(masked))
    ratio = float(row[c_a] / max(row[c_b], RATIO_FLOOR))
    return ratio, c_a, c_b


@dataclass(frozen=True)
class QueryCandidate:
    """One selected sample's passage through the BVSB gate."""

    sample_index: int
    cluster_id: int
    skl_score: float
    bvsb_ratio: float
    best_class: int
    second_class: int
    accepted: bool
    assigned_label: Optional[int]
    label_source: str
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "index": self.sample_index,
            "cluster": self.cluster_id,
            "skl_score": self.skl_score,
            "bvsb_ratio": self.bvsb_ratio,
            "best_class": self.best_class,
            "second_class": self.second_class,
            "accepted": self.accepted,
            "assigned_label": self.assigned_label,
            "label_source": self.label_source,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class QueryBatch:
    """The candidates of one iteration, in selection order."""

    candidates: tuple[QueryCandidate, ...]

    @property
    def accepted(self) -> tuple[QueryCandidate, ...]:
        return tuple(c for c in self.candidates if c.accepted)

    @property
    def accepted_count(self) -> int:
        return sum(1 for c in self.candidates if c.accepted)

    @property
    def rejected_indices(self) -> tuple[int, ...]:
        return tuple(c.sample_index for c in self.candidates if not c.accepted)

    def to_dicts(self) -> list[dict]:
        return [c.to_dict() for c in self.candidates]


def filter_batch(
    selected: Sequence[int],
    F: LabelDistribution,
    delta: float,
    mode: str,
    oracle: Optional[Oracle] = None,
    cluster_ids: Optional[Mapping[int, int]] = None,
    skl_scores: Optional[Mapping[int, float]] = None,
    gate_oracle_labels: bool = False,
) -> QueryBatch:
    """Decide, per selected candidate, admission to the labeled pool.

    Self-estimated mode accepts a candidate iff its BVSB ratio strictly
    exceeds ``delta`` and assigns the argmax class. Oracle mode asks the
    annotator for every candidate and accepts its answer (abstentions are
    rejections with a reason); with ``gate_oracle_labels`` the ratio test is
    applied to oracle answers too. Rejection never removes a sample from
    future eligibility.
    """
    if len(selected) == 0:
        raise ValueError("cannot filter an empty candidate batch")
    if not delta > 1:
        raise ValueError(f"delta must be > 1, got {delta}")
    if mode not in LABEL_MODES:
        raise ValueError(f"mode must be one of {sorted(LABEL_MODES)}, got {mode!r}")
    if mode == "oracle" and oracle is None:
        raise ValueError("oracle mode requires a label provider")

    cluster_ids = cluster_ids or {}
    skl_scores = skl_scores or {}
    candidates = []
    for idx in selected:
        idx = int(idx)
        ratio, c_a, c_b = bvsb_ratio(F.probs[idx])
        cluster = int(cluster_ids.get(idx, -1))
        score = float(skl_scores.get(idx, float("nan")))

        if mode == "self-estimated":
            accepted = ratio > delta
            candidates.append(
                QueryCandidate(
                    sample_index=idx,
                    cluster_id=cluster,
                    skl_score=score,
                    bvsb_ratio=ratio,
                    best_class=c_a,
                    second_class=c_b,
                    accepted=accepted,
                    assigned_label=c_a if accepted else None,
                    label_source=PROVENANCE_SELF,
                    reason=None if accepted else "bvsb-below-delta",
                )
            )
        else:
            answer = oracle(idx)
            if answer is None:
                accepted, label, reason = False, None, "abstained"
            elif gate_oracle_labels and not ratio > delta:
                accepted, label, reason = False, None, "bvsb-below-delta"
            else:
                accepted, label, reason = True, int(answer), None
            candidates.append(
                QueryCandidate(
                    sample_index=idx,
                    cluster_id=cluster,
                    skl_score=score,
                    bvsb_ratio=ratio,
                    best_class=c_a,
                    second_class=c_b,
                    accepted=accepted,
                    assigned_label=label,
                    label_source=PROVENANCE_ORACLE,
                    reason=reason,
                )
            )
    return QueryBatch(candidates=tuple(candidates))


class GroundTruthOracle:
    """Annotator that always answers with the true label."""

    def __init__(self, ground_truth: np.ndarray):
        self.ground_truth = np.asarray(ground_truth, dtype=np.int64)

    def __call__(self, index: int) -> int:
        return int(self.ground_truth[index])


class NoisyOracle:
    """Annotator that flips the true label with a fixed probability.

    The flip decision for a given sample index is a pure function of
    (seed, index), so an index answers identically no matter when or how
    often it is queried. A flipped answer is uniform over the other classes.
    """

    def __init__(self, ground_truth: np.ndarray, n_classes: int, flip_probability: float, seed: int = 0):
        if not 0.0 <= flip_probability <= 1.0:
            raise ValueError(f"flip_probability must lie in [0, 1], got {flip_probability}")
        self.ground_truth = np.asarray(ground_truth, dtype=np.int64)
        self.n_classes = int(n_classes)
        self.flip_probability = float(flip_probability)
        self.seed = int(seed)

    def __call__(self, index: int) -> int:
        truth = int(self.ground_truth[index])
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, int(index))))
        if rng.random() >= self.flip_probability:
            return truth
        wrong = int(rng.integers(self.n_classes - 1))
        return wrong if wrong < truth else wrong + 1
