"""
Binary evaluation metrics with Attack (1) as the positive class.

Any 0/0 ratio (precision, recall or F1 of an empty class) is defined as 0.
ROC-AUC is the Mann-Whitney statistic with ties counted as one half.
"""

import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from backend.src.errors import MetricUndefinedError, UsageError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """Test/validation metrics of one thresholded classifier."""

    accuracy: float
    balanced_accuracy: float
    precision_pos: float
    recall_pos: float
    f1_pos: float
    precision_neg: float
    recall_neg: float
    f1_neg: float
    macro_f1: float
    confusion: ConfusionCounts
    roc_auc: Optional[float] = None
    threshold: float = DEFAULT_THRESHOLD

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        data = dict(data)
        data["confusion"] = ConfusionCounts(**data["confusion"])
        return cls(**data)


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def _f1(precision: float, recall: float) -> float:
    return _ratio(2 * precision * recall, precision + recall)


def _as_binary(values: Sequence[int], name: str) -> np.ndarray:
    array = np.asarray(values)
    if array.ndim != 1:
        raise UsageError(f"{name} must be a 1-D vector")
    return array.astype(np.int8)


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> ConfusionCounts:
    """Count tp/fp/tn/fn of binary predictions."""
    y_true = _as_binary(y_true, "y_true")
    y_pred = _as_binary(y_pred, "y_pred")
    if y_true.shape != y_pred.shape:
        raise UsageError(
            f"Length mismatch: {y_true.size} labels vs {y_pred.size} predictions"
        )
    if y_true.size == 0:
        raise UsageError("confusion needs at least one sample")
    positive = y_true == 1
    predicted = y_pred == 1
    return ConfusionCounts(
        tp=int(np.sum(positive & predicted)),
        fp=int(np.sum(~positive & predicted)),
        tn=int(np.sum(~positive & ~predicted)),
        fn=int(np.sum(positive & ~predicted)),
    )


def classification_metrics(
    c: ConfusionCounts, threshold: float = DEFAULT_THRESHOLD
) -> MetricsReport:
    """
    Derive the threshold-dependent metrics from confusion counts.

    Args:
        c: Confusion counts (total must be positive)
        threshold: Decision threshold the counts were produced with

    Returns:
        MetricsReport without ROC-AUC
    """
    if c.total <= 0:
        raise UsageError("Confusion counts are empty")
    precision_pos = _ratio(c.tp, c.tp + c.fp)
    recall_pos = _ratio(c.tp, c.tp + c.fn)
    precision_neg = _ratio(c.tn, c.tn + c.fn)
    recall_neg = _ratio(c.tn, c.tn + c.fp)
    f1_pos = _f1(precision_pos, recall_pos)
    f1_neg = _f1(precision_neg, recall_neg)
    return MetricsReport(
        accuracy=(c.tp + c.tn) / c.total,
        balanced_accuracy=(recall_pos + recall_neg) / 2,
        precision_pos=precision_pos,
        recall_pos=recall_pos,
        f1_pos=f1_pos,
        precision_neg=precision_neg,
        recall_neg=recall_neg,
        f1_neg=f1_neg,
        macro_f1=(f1_pos + f1_neg) / 2,
        confusion=c,
        threshold=threshold,
    )


def roc_auc(y_true: Sequence[int], scores: Sequence[float]) -> float:
    """
    Area under the ROC curve via tie-averaged ranks.

    Equal to the fraction of (positive, negative) pairs where the positive
    scores higher, ties counting one half.

    Raises:
        MetricUndefinedError: Only one class is present
    """
    y_true = _as_binary(y_true, "y_true")
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.shape != scores.shape:
        raise UsageError("y_true and scores must have the same length")
    n_pos = int(np.sum(y_true == 1))
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError(
            "ROC-AUC is undefined when only one class is present"
        )
    ranks = rankdata(scores, method="average")
    rank_sum = float(np.sum(ranks[y_true == 1]))
    wins = rank_sum - n_pos * (n_pos + 1) / 2
    return wins / (n_pos * n_neg)


def threshold_candidates(scores: Sequence[float]) -> np.ndarray:
    """Midpoints of consecutive distinct scores plus 0, 0.5 and 1, ascending."""
    distinct = np.unique(np.asarray(scores, dtype=np.float64))
    midpoints = (distinct[:-1] + distinct[1:]) / 2
    return np.unique(np.concatenate([midpoints, [0.0, DEFAULT_THRESHOLD, 1.0]]))


def macro_f1_at(
    y_true: np.ndarray, scores: np.ndarray, thresholds: np.ndarray
) -> np.ndarray:
    """Macro-F1 of ``score >= t`` for every threshold t (vectorized)."""
    positives = np.sort(scores[y_true == 1])
    negatives = np.sort(scores[y_true == 0])
    tp = positives.size - np.searchsorted(positives, thresholds, side="left")
    fp = negatives.size - np.searchsorted(negatives, thresholds, side="left")
    fn = positives.size - tp
    tn = negatives.size - fp

    def f1(hit, false_alarm, miss):
        denominator = 2 * hit + false_alarm + miss
        return np.divide(
            2 * hit,
            denominator,
            out=np.zeros(hit.shape, dtype=np.float64),
            where=denominator > 0,
        )

    return (f1(tp, fp, fn) + f1(tn, fn, fp)) / 2


def select_threshold(
    y_true_val: Sequence[int], scores_val: Sequence[float]
) -> float:
    """
    Pick the decision threshold that maximizes validation macro-F1.

    Candidates are the midpoints of consecutive distinct sorted scores plus
    {0, 0.5, 1}. Ties go to the candidate closest to 0.5, then the lower one.

    Raises:
        MetricUndefinedError: Validation labels contain a single class
    """
    y_true = _as_binary(y_true_val, "y_true_val")
    scores = np.asarray(scores_val, dtype=np.float64)
    if y_true.shape != scores.shape:
        raise UsageError("y_true_val and scores_val must have the same length")
    if np.unique(y_true).size < 2:
        raise MetricUndefinedError(
            "Threshold selection needs both classes in the validation labels"
        )
    candidates = threshold_candidates(scores)
    values = macro_f1_at(y_true, scores, candidates)
    best = values.max()
    tied = candidates[values == best]
    # F1 values are compared exactly; ties are common with quantized tree votes
    distance = np.abs(tied - DEFAULT_THRESHOLD)
    chosen = float(tied[np.flatnonzero(distance == distance.min())[0]])
    if tied.size > 1:
        logger.debug("%d thresholds tie at macro-F1 %.4f", tied.size, best)
    return chosen


def evaluate_scores(
    y_true: Sequence[int], scores: Sequence[float], threshold: float
) -> MetricsReport:
    """Full report (including ROC-AUC) of scores thresholded at ``threshold``."""
    scores = np.asarray(scores, dtype=np.float64)
    predictions = (scores >= threshold).astype(np.int8)
    report = classification_metrics(confusion(y_true, predictions), threshold)
    return replace(report, roc_auc=roc_auc(y_true, scores))
