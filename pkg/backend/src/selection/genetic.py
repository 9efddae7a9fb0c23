"""
Genetic algorithm for binary feature selection.

The search core (``run_search``) only sees a batch objective mapping masks to
J values, smaller being better. ``run_ga`` plugs in the wrapper fitness, then
retrains a full-strength classifier on the best subset and reports its test
metrics.

Each generation keeps the ``elitism_count`` best masks unchanged and fills the
rest with tournament selection, uniform crossover, bit-flip mutation and a
repair step that tops masks up to ``min_features`` bits.
"""

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from backend.src.anomaly_detector import (
    ModelSettings,
    fit_and_evaluate,
    model_name_for_mode,
)
from backend.src.data.preprocess import PreparedSplits
from backend.src.detection.metrics import MetricsReport
from backend.src.errors import ConfigError
from backend.src.selection.config import GaConfig
from backend.src.selection.fitness import FitnessEvaluator
from backend.src.selection.mask import FeatureMask

logger = logging.getLogger(__name__)

Objective = Callable[[Sequence[FeatureMask]], Sequence[float]]

HISTORY_COLUMNS = ("generation", "best_J", "mean_J", "best_popcount")


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_popcount: int


@dataclass(frozen=True)
class SearchOutcome:
    best_mask: FeatureMask
    best_fitness: float
    history: tuple[GenerationStats, ...]
    population: tuple[FeatureMask, ...]


@dataclass(frozen=True)
class GaResult:
    """Outcome of one GA run followed by the final classifier."""

    seed: int
    best_mask: FeatureMask
    best_fitness: float
    validation_macro_f1: float
    history: tuple[GenerationStats, ...]
    selected_features: tuple[str, ...]
    final_model: str
    threshold: float
    test: MetricsReport
    n_evaluations: int
    cache_hits: int
    seconds: float = 0.0
    importances: tuple[float, ...] = field(default_factory=tuple)

    @property
    def n_selected(self) -> int:
        return self.best_mask.popcount

    @property
    def reduction_ratio(self) -> float:
        return 1.0 - self.best_mask.popcount / self.best_mask.size

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "mask": str(self.best_mask),
            "best_fitness": self.best_fitness,
            "validation_macro_f1": self.validation_macro_f1,
            "history": [asdict(row) for row in self.history],
            "selected_features": list(self.selected_features),
            "final_model": self.final_model,
            "threshold": self.threshold,
            "test": self.test.to_dict(),
            "n_evaluations": self.n_evaluations,
            "cache_hits": self.cache_hits,
            "reduction_ratio": self.reduction_ratio,
            "seconds": self.seconds,
            "importances": list(self.importances),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaResult":
        return cls(
            seed=int(data["seed"]),
            best_mask=FeatureMask.from_string(data["mask"]),
            best_fitness=float(data["best_fitness"]),
            validation_macro_f1=float(data["validation_macro_f1"]),
            history=tuple(GenerationStats(**row) for row in data["history"]),
            selected_features=tuple(data["selected_features"]),
            final_model=data["final_model"],
            threshold=float(data["threshold"]),
            test=MetricsReport.from_dict(data["test"]),
            n_evaluations=int(data["n_evaluations"]),
            cache_hits=int(data["cache_hits"]),
            seconds=float(data.get("seconds", 0.0)),
            importances=tuple(data.get("importances", ())),
        )


def repair(bits: np.ndarray, min_features: int, rng: np.random.Generator) -> np.ndarray:
    """Set uniformly chosen unset bits until at least ``min_features`` are set."""
    missing = min_features - int(bits.sum())
    if missing > 0:
        unset = np.flatnonzero(~bits)
        bits[rng.choice(unset, size=missing, replace=False)] = True
    return bits


def init_population(
    cfg: GaConfig, n_features: int, rng: np.random.Generator
) -> list[FeatureMask]:
    """
    Draw ``population_size`` random masks, each bit set with
    ``init_inclusion_prob``, repaired up to ``min_features``.

    Raises:
        ConfigError: Fewer features than ``min_features``
    """
    if n_features < cfg.min_features:
        raise ConfigError(
            f"min_features={cfg.min_features} exceeds the {n_features} "
            "available features"
        )
    population = []
    for _ in range(cfg.population_size):
        bits = rng.random(n_features) < cfg.init_inclusion_prob
        population.append(FeatureMask(repair(bits, cfg.min_features, rng)))
    return population


def rank_order(fitness_values: np.ndarray, popcounts: np.ndarray) -> np.ndarray:
    """Indices sorted by J, then popcount, then position."""
    positions = np.arange(fitness_values.size)
    return np.lexsort((positions, popcounts, fitness_values))


def _tournament(
    fitness_values: np.ndarray,
    popcounts: np.ndarray,
    size: int,
    rng: np.random.Generator,
) -> int:
    contenders = np.sort(rng.choice(fitness_values.size, size=size, replace=False))
    best = rank_order(fitness_values[contenders], popcounts[contenders])[0]
    return int(contenders[best])


def uniform_crossover(
    first: np.ndarray, second: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Two complementary children; each bit comes from one parent at random."""
    take_first = rng.random(first.size) < 0.5
    return (
        np.where(take_first, first, second),
        np.where(take_first, second, first),
    )


def mutate(bits: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Flip every bit independently with probability ``rate``."""
    return bits ^ (rng.random(bits.size) < rate)


def next_generation(
    population: Sequence[FeatureMask],
    fitness_values: Sequence[float],
    cfg: GaConfig,
    rng: np.random.Generator,
) -> list[FeatureMask]:
    """
    Breed the next population from an evaluated one.

    Args:
        population: Current masks
        fitness_values: J of each mask, aligned with ``population``
        cfg: GA configuration
        rng: Generator owned by the run

    Returns:
        A population of the same size whose first ``elitism_count`` entries
        are the best current masks, unchanged
    """
    fitness_values = np.asarray(fitness_values, dtype=np.float64)
    popcounts = np.array([mask.popcount for mask in population])
    size = len(population)
    n_features = population[0].size
    mutation_rate = cfg.mutation_rate_for(n_features)

    order = rank_order(fitness_values, popcounts)
    offspring = [population[i] for i in order[: cfg.elitism_count]]

    def select() -> FeatureMask:
        winner = _tournament(fitness_values, popcounts, cfg.tournament_size, rng)
        return population[winner]

    while len(offspring) < size:
        first, second = select(), select()
        if rng.random() < cfg.crossover_rate:
            children = uniform_crossover(first.bits, second.bits, rng)
        else:
            children = (first.bits.copy(), second.bits.copy())

        for child in children:
            if len(offspring) == size:
                break
            child = mutate(child, mutation_rate, rng)
            offspring.append(FeatureMask(repair(child, cfg.min_features, rng)))

    return offspring


def run_search(n_features: int, cfg: GaConfig, objective: Objective) -> SearchOutcome:
    """
    Minimize ``objective`` over binary masks of length ``n_features``.

    The best-ever mask is replaced only by a strictly better one (lower J, or
    equal J with fewer features), so earlier masks win exact ties.
    """
    rng = np.random.default_rng(cfg.seed)
    population = init_population(cfg, n_features, rng)
    fitness_values = np.asarray(objective(population), dtype=np.float64)

    best_mask: Optional[FeatureMask] = None
    best_fitness = np.inf
    history = []
    for generation in range(cfg.generations + 1):
        if generation > 0:
            population = next_generation(population, fitness_values, cfg, rng)
            fitness_values = np.asarray(objective(population), dtype=np.float64)

        leader = int(
            rank_order(fitness_values, np.array([m.popcount for m in population]))[0]
        )
        candidate = population[leader]
        if best_mask is None or (fitness_values[leader], candidate.popcount) < (
            best_fitness,
            best_mask.popcount,
        ):
            best_mask, best_fitness = candidate, float(fitness_values[leader])

        stats = GenerationStats(
            generation, best_fitness, float(fitness_values.mean()), best_mask.popcount
        )
        history.append(stats)
        logger.info(
            "Generation %d: best J %.5f (%d features), mean J %.5f",
            generation,
            stats.best_fitness,
            stats.best_popcount,
            stats.mean_fitness,
        )

    return SearchOutcome(best_mask, best_fitness, tuple(history), tuple(population))


def run_ga(
    splits: PreparedSplits,
    cfg: GaConfig,
    evaluator: Optional[FitnessEvaluator] = None,
) -> GaResult:
    """
    Run the GA on prepared splits and evaluate the selected subset.

    Args:
        splits: Imputed train/validation/test parts of the active feature set
        cfg: GA configuration (its ``final_model`` forest is trained on z*)
        evaluator: Optional shared evaluator; its cache is reused across runs
            and its own config decides J

    Returns:
        GaResult with z*, the search history and the final test metrics

    Example:
        >>> result = run_ga(splits, GaConfig().for_seed(1))
        >>> print(result.n_selected, result.test.macro_f1)
    """
    started = time.perf_counter()
    evaluator = evaluator or FitnessEvaluator(splits, cfg)
    hits_before = evaluator.hits
    evaluations_before = evaluator.n_evaluations

    outcome = run_search(splits.train.n_features, cfg, evaluator)
    best = outcome.best_mask
    record = evaluator.record(best)

    final_name = model_name_for_mode(cfg.final_model.mode)
    subset = splits.subset_columns(best.indices)
    final = fit_and_evaluate(final_name, subset, ModelSettings(forest=cfg.final_model))
    selected = tuple(splits.feature_names[i] for i in best.indices)

    seconds = time.perf_counter() - started
    logger.info(
        "GA seed %d selected %d/%d features: test macro-F1 %.4f, ROC-AUC %.4f",
        cfg.seed,
        best.popcount,
        best.size,
        final.test.macro_f1,
        final.test.roc_auc,
    )
    return GaResult(
        seed=cfg.seed,
        best_mask=best,
        best_fitness=outcome.best_fitness,
        validation_macro_f1=record.macro_f1,
        history=outcome.history,
        selected_features=selected,
        final_model=final_name,
        threshold=final.threshold,
        test=final.test,
        n_evaluations=evaluator.n_evaluations - evaluations_before,
        # record() above is one extra lookup, not part of the search
        cache_hits=evaluator.hits - hits_before - 1,
        seconds=seconds,
        importances=tuple(float(v) for v in final.model.feature_importances()),
    )
