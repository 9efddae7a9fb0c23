#!/usr/bin/env python3
"""
Attack/natural event detection pipeline shared by the experiments and the GA.

Every model goes through the same three steps:

1. Train on the training part
2. Pick the decision threshold on the validation part (max macro-F1)
3. Report test metrics at that threshold

Class imbalance is handled by the threshold, never by class weights.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Union

from backend.src.data.preprocess import PreparedSplits
from backend.src.detection.forest import (
    EXTRA,
    RANDOM_FOREST,
    ForestConfig,
    ForestModel,
    predict_proba,
    train_forest,
)
from backend.src.detection.logistic import LinearModel, train_logistic
from backend.src.detection.metrics import (
    MetricsReport,
    evaluate_scores,
    select_threshold,
)
from backend.src.errors import UsageError

logger = logging.getLogger(__name__)

EXTRA_TREES = "extra_trees"
RANDOM_FOREST_MODEL = "random_forest"
LOGISTIC = "logistic"

MODEL_NAMES = (EXTRA_TREES, RANDOM_FOREST_MODEL, LOGISTIC)
TREE_MODELS = (EXTRA_TREES, RANDOM_FOREST_MODEL)


@dataclass(frozen=True)
class LogisticConfig:
    epochs: int = 10_000
    learning_rate: float = 1.0  # multiple of the curvature-safe step
    l2: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class ModelSettings:
    """Per-model configuration for one experiment."""

    forest: ForestConfig = field(default_factory=ForestConfig)
    logistic: LogisticConfig = field(default_factory=LogisticConfig)

    def forest_for(self, model_name: str) -> ForestConfig:
        mode = EXTRA if model_name == EXTRA_TREES else RANDOM_FOREST
        return replace(self.forest, mode=mode)


@dataclass(frozen=True)
class DetectionResult:
    model_name: str
    model: Union[ForestModel, LinearModel]
    threshold: float
    validation_macro_f1: float
    test: MetricsReport
    seconds: float


def model_name_for_mode(mode: str) -> str:
    return EXTRA_TREES if mode == EXTRA else RANDOM_FOREST_MODEL


def train_model(
    model_name: str, splits: PreparedSplits, settings: ModelSettings
) -> Union[ForestModel, LinearModel]:
    """Train one roster model on the training part of ``splits``."""
    X, y = splits.train.values, splits.train.labels
    if model_name in TREE_MODELS:
        return train_forest(X, y, settings.forest_for(model_name))
    if model_name == LOGISTIC:
        cfg = settings.logistic
        model = train_logistic(
            X,
            y,
            epochs=cfg.epochs,
            learning_rate=cfg.learning_rate,
            l2=cfg.l2,
            seed=cfg.seed,
        )
        logger.info(
            "logistic: %d epochs, final training loss %.6f",
            model.epochs_run,
            model.final_loss,
        )
        return model
    raise UsageError(
        f"Unknown model '{model_name}' (expected one of {', '.join(MODEL_NAMES)})"
    )


def fit_and_evaluate(
    model_name: str, splits: PreparedSplits, settings: ModelSettings
) -> DetectionResult:
    """
    Train, select the validation threshold and evaluate on the test part.

    Args:
        model_name: "extra_trees", "random_forest" or "logistic"
        splits: Imputed train/validation/test parts
        settings: Forest and logistic-regression configuration

    Returns:
        DetectionResult with the trained model and its test MetricsReport

    Example:
        >>> result = fit_and_evaluate("extra_trees", splits, ModelSettings())
        >>> print(f"macro-F1 {result.test.macro_f1:.4f}")
    """
    started = time.perf_counter()
    model = train_model(model_name, splits, settings)

    val_scores = predict_proba(model, splits.validation.values)
    threshold = select_threshold(splits.validation.labels, val_scores)
    validation = evaluate_scores(splits.validation.labels, val_scores, threshold)

    test_scores = predict_proba(model, splits.test.values)
    test = evaluate_scores(splits.test.labels, test_scores, threshold)
    seconds = time.perf_counter() - started

    logger.info(
        "%s on %d features: threshold %.4f, test macro-F1 %.4f, ROC-AUC %.4f",
        model_name,
        splits.train.n_features,
        threshold,
        test.macro_f1,
        test.roc_auc,
    )
    return DetectionResult(
        model_name, model, threshold, validation.macro_f1, test, seconds
    )
