"""
Wrapper fitness of a feature mask.

J(z) = alpha * (1 - MacroF1(z)) + (1 - alpha) * |z| / d, smaller is better.
MacroF1(z) is the validation macro-F1 of the evaluator forest trained on the
masked training columns, at its validation-selected threshold.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from backend.src.data.preprocess import PreparedSplits
from backend.src.detection.forest import predict_proba, train_forest
from backend.src.detection.metrics import macro_f1_at, select_threshold
from backend.src.errors import UsageError
from backend.src.selection.config import GaConfig
from backend.src.selection.mask import FeatureMask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitnessRecord:
    fitness: float
    macro_f1: float
    threshold: float
    popcount: int


def compactness_fitness(
    macro_f1: float, popcount: int, n_features: int, alpha: float
) -> float:
    """
    Combine validation macro-F1 and subset size into J.

    Example:
        >>> round(compactness_fitness(0.92, 28, 112, 0.95), 10)
        0.0885
    """
    return alpha * (1.0 - macro_f1) + (1.0 - alpha) * popcount / n_features


def evaluate_mask(
    mask: FeatureMask, splits: PreparedSplits, cfg: GaConfig
) -> FitnessRecord:
    """Train the evaluator on the masked columns and score it on validation."""
    if mask.size != splits.train.n_features:
        raise UsageError(
            f"Mask has {mask.size} bits but the data has "
            f"{splits.train.n_features} features"
        )
    if mask.popcount == 0:
        raise UsageError("Cannot evaluate an empty feature mask")

    columns = mask.indices
    model = train_forest(
        splits.train.values[:, columns], splits.train.labels, cfg.evaluator
    )
    y_val = splits.validation.labels
    scores = predict_proba(model, splits.validation.values[:, columns])
    threshold = select_threshold(y_val, scores)
    macro_f1 = float(macro_f1_at(y_val, scores, np.array([threshold]))[0])
    return FitnessRecord(
        compactness_fitness(macro_f1, mask.popcount, mask.size, cfg.alpha),
        macro_f1,
        threshold,
        mask.popcount,
    )


def fitness(mask: FeatureMask, splits: PreparedSplits, cfg: GaConfig) -> float:
    """J of one mask; deterministic for a fixed mask, data and evaluator seed."""
    return evaluate_mask(mask, splits, cfg).fitness


class FitnessEvaluator:
    """
    Batch objective for the GA with a cache keyed on the mask bits.

    Every requested mask is appended to ``history`` (cache hits included),
    so callers can audit what the search looked at.
    """

    def __init__(self, splits: PreparedSplits, cfg: GaConfig):
        self.splits = splits
        self.cfg = cfg
        self.n_features = splits.train.n_features
        self.cache: dict[bytes, FitnessRecord] = {}
        self.history: list[FeatureMask] = []
        self.hits = 0

    @property
    def n_evaluations(self) -> int:
        return len(self.cache)

    def record(self, mask: FeatureMask) -> FitnessRecord:
        self.evaluate([mask])
        return self.cache[mask.key]

    def __call__(self, masks: Sequence[FeatureMask]) -> np.ndarray:
        return self.evaluate(masks)

    def evaluate(self, masks: Sequence[FeatureMask]) -> np.ndarray:
        """J of every mask, training only masks that are not cached yet."""
        pending: dict[bytes, FeatureMask] = {}
        for mask in masks:
            self.history.append(mask)
            if mask.key in self.cache or mask.key in pending:
                self.hits += 1
            else:
                pending[mask.key] = mask

        if pending:
            todo = list(pending.values())
            if self.cfg.n_jobs == 1:
                records = [evaluate_mask(m, self.splits, self.cfg) for m in todo]
            else:
                records = Parallel(n_jobs=self.cfg.n_jobs)(
                    delayed(evaluate_mask)(m, self.splits, self.cfg) for m in todo
                )
            for mask, rec in zip(todo, records):
                self.cache[mask.key] = rec
            logger.debug(
                "Evaluated %d new masks (%d cached so far)", len(todo), len(self.cache)
            )

        return np.array([self.cache[m.key].fitness for m in masks], dtype=np.float64)
