"""
Experiment runners: baseline table, feature-set ablation and the multi-seed
GA study with its full-vs-selected comparison.
"""

import logging
from collections.abc import Iterable
from dataclasses import dataclass, replace
from itertools import product
from typing import Optional

from backend.src.anomaly_detector import (
    TREE_MODELS,
    fit_and_evaluate,
    model_name_for_mode,
)
from backend.src.data.dataset import (
    FEATURE_SETS,
    Dataset,
    load_csv,
    select_feature_set,
)
from backend.src.data.manifest import load_manifest
from backend.src.data.preprocess import PreparedSplits, prepare_splits
from backend.src.data.synthetic import generate_synthetic
from backend.src.detection.metrics import MetricsReport
from backend.src.errors import DataError, GridAnomalyError, MetricUndefinedError
from backend.src.harness import reports
from backend.src.harness.config import ExperimentConfig
from backend.src.selection.fitness import FitnessEvaluator
from backend.src.selection.genetic import GaResult, run_ga
from backend.src.storage.results_store import ResultsStore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResultRow:
    """Test metrics of one model on one feature set."""

    model: str
    feature_set: str
    n_features: int
    metrics: MetricsReport
    seconds: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "feature_set": self.feature_set,
            "n_features": self.n_features,
            "metrics": self.metrics.to_dict(),
            "seconds": self.seconds,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResultRow":
        return cls(
            model=data["model"],
            feature_set=data["feature_set"],
            n_features=int(data["n_features"]),
            metrics=MetricsReport.from_dict(data["metrics"]),
            seconds=float(data["seconds"]),
            seed=int(data["seed"]),
        )


@dataclass(frozen=True)
class GaStudy:
    """Per-seed GA runs plus the full-feature reference on the same split."""

    feature_set: str
    n_features: int
    runs: tuple[GaResult, ...]
    full_feature: Optional[ResultRow]
    complete: bool = True

    def to_dict(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "n_features": self.n_features,
            "runs": [run.to_dict() for run in self.runs],
            "full_feature": self.full_feature.to_dict() if self.full_feature else None,
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaStudy":
        full = data.get("full_feature")
        return cls(
            feature_set=data["feature_set"],
            n_features=int(data["n_features"]),
            runs=tuple(GaResult.from_dict(run) for run in data["runs"]),
            full_feature=ResultRow.from_dict(full) if full else None,
            complete=bool(data.get("complete", True)),
        )


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    """Load the configured CSV files, or generate the synthetic dataset."""
    if cfg.uses_synthetic:
        logger.info("No DATA_DIR configured; generating a synthetic dataset")
        return generate_synthetic(cfg.synthetic)
    if not cfg.data_dir.is_dir():
        raise DataError(f"Data directory not found: {cfg.data_dir}")
    paths = sorted(cfg.data_dir.glob(cfg.data_glob))
    if not paths:
        raise DataError(f"No files match '{cfg.data_glob}' in {cfg.data_dir}")
    return load_csv(
        paths,
        manifest=load_manifest(cfg.manifest_path),
        label_column=cfg.label_column,
        label_map=cfg.label_map,
        n_jobs=cfg.n_jobs,
    )


def prepare_feature_set(
    ds: Dataset, set_name: str, cfg: ExperimentConfig
) -> PreparedSplits:
    return prepare_splits(
        select_feature_set(ds, set_name), cfg.split_fractions, cfg.split_seed
    )


def _identify(error: GridAnomalyError, context: str) -> GridAnomalyError:
    return type(error)(f"{context}: {error}")


def run_pairs(
    cfg: ExperimentConfig, ds: Dataset, pairs: Iterable[tuple[str, str]]
) -> list[ResultRow]:
    """Evaluate (model, feature set) pairs; rows come back sorted by the pair."""
    prepared: dict[str, PreparedSplits] = {}
    rows = []
    for model, feature_set in sorted(set(pairs)):
        try:
            if feature_set not in prepared:
                prepared[feature_set] = prepare_feature_set(ds, feature_set, cfg)
            splits = prepared[feature_set]
            result = fit_and_evaluate(model, splits, cfg.settings)
        except (DataError, MetricUndefinedError) as e:
            raise _identify(e, f"{model} on {feature_set}") from e
        seed = (
            cfg.settings.forest.seed
            if model in TREE_MODELS
            else cfg.settings.logistic.seed
        )
        rows.append(
            ResultRow(
                model,
                feature_set,
                splits.train.n_features,
                result.test,
                result.seconds,
                seed,
            )
        )
    return rows


def run_baselines(
    cfg: ExperimentConfig, ds: Optional[Dataset] = None
) -> list[ResultRow]:
    """
    Every configured model on every configured feature set.

    Args:
        cfg: Experiment configuration
        ds: Preloaded dataset (loaded from cfg when omitted)

    Returns:
        Rows sorted by (model, feature set)
    """
    ds = ds if ds is not None else load_dataset(cfg)
    return run_pairs(cfg, ds, product(cfg.models, cfg.feature_sets))


def run_ablation(
    cfg: ExperimentConfig, ds: Optional[Dataset] = None
) -> list[ResultRow]:
    """The tree models of the roster on all three nested feature sets."""
    ds = ds if ds is not None else load_dataset(cfg)
    models = [m for m in cfg.models if m in TREE_MODELS] or list(TREE_MODELS)
    return run_pairs(cfg, ds, product(models, FEATURE_SETS))


def run_ga_study(
    cfg: ExperimentConfig,
    ds: Optional[Dataset] = None,
    store: Optional[ResultsStore] = None,
) -> GaStudy:
    """
    Run the GA once per configured seed and compare against all features.

    Each finished seed is written to ``store`` straight away. If a seed fails,
    the runs completed so far are saved (marked incomplete) before the error
    propagates.

    Args:
        cfg: Experiment configuration with the GA block
        ds: Preloaded dataset (loaded from cfg when omitted)
        store: Output directory for per-seed files and results.json

    Returns:
        GaStudy with one GaResult per seed, in seed order
    """
    ds = ds if ds is not None else load_dataset(cfg)
    splits = prepare_feature_set(ds, cfg.ga_feature_set, cfg)
    n_features = splits.train.n_features
    logger.info(
        "GA study on %s (%d features), seeds %s",
        cfg.ga_feature_set,
        n_features,
        list(cfg.ga_seeds),
    )

    final_name = model_name_for_mode(cfg.ga.final_model.mode)
    # Same classifier as the final GA model, trained on every feature
    reference = replace(cfg.ga.final_model, seed=cfg.settings.forest.seed)
    full = fit_and_evaluate(
        final_name, splits, replace(cfg.settings, forest=reference)
    )
    full_row = ResultRow(
        final_name,
        cfg.ga_feature_set,
        n_features,
        full.test,
        full.seconds,
        cfg.settings.forest.seed,
    )

    runs: list[GaResult] = []
    for seed in sorted(cfg.ga_seeds):
        ga_cfg = cfg.ga.for_seed(seed)
        try:
            run = run_ga(splits, ga_cfg, FitnessEvaluator(splits, ga_cfg))
        except GridAnomalyError as e:
            if store is not None:
                partial = GaStudy(
                    cfg.ga_feature_set, n_features, tuple(runs), full_row, False
                )
                store.save_section("ga", partial.to_dict(), cfg.to_dict())
            raise _identify(e, f"GA seed {seed}") from e
        runs.append(run)
        if store is not None:
            reports.write_ga_run(store, run)

    return GaStudy(cfg.ga_feature_set, n_features, tuple(runs), full_row)

