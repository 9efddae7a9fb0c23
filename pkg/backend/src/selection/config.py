"""Hyperparameters of the genetic feature search."""

from dataclasses import dataclass, field, replace
from typing import Optional

from backend.src.detection.forest import EXTRA, ForestConfig
from backend.src.errors import ConfigError


@dataclass(frozen=True)
class GaConfig:
    """
    GA settings. None of these are tuned; they are conventional values sized
    so one run finishes in minutes on a desktop.

    ``mutation_rate=None`` means 1/d for a d-feature search.
    """

    population_size: int = 40
    generations: int = 30
    alpha: float = 0.95
    tournament_size: int = 3
    crossover_rate: float = 0.9
    mutation_rate: Optional[float] = None
    elitism_count: int = 2
    min_features: int = 5
    init_inclusion_prob: float = 0.5
    seed: int = 0
    evaluator: ForestConfig = field(
        default_factory=lambda: ForestConfig(n_trees=100, mode=EXTRA)
    )
    final_model: ForestConfig = field(
        default_factory=lambda: ForestConfig(n_trees=300, mode=EXTRA)
    )
    n_jobs: int = 1

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("GA population_size must be at least 2")
        if self.generations < 0:
            raise ConfigError("GA generations must be non-negative")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"GA alpha must lie in (0, 1], got {self.alpha}")
        if not 2 <= self.tournament_size <= self.population_size:
            raise ConfigError("GA tournament_size must be in [2, population_size]")
        if not 0 <= self.elitism_count < self.population_size:
            raise ConfigError("GA elitism_count must be below population_size")
        if self.min_features < 1:
            raise ConfigError("GA min_features must be at least 1")
        for name in ("crossover_rate", "init_inclusion_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"GA {name} must lie in [0, 1], got {value}")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError(
                f"GA mutation_rate must lie in [0, 1], got {self.mutation_rate}"
            )

    def mutation_rate_for(self, n_features: int) -> float:
        if self.mutation_rate is None:
            return 1.0 / n_features
        return self.mutation_rate

    def for_seed(self, seed: int) -> "GaConfig":
        """Copy whose GA, evaluator and final-model seeds all equal ``seed``."""
        return replace(
            self,
            seed=seed,
            evaluator=replace(self.evaluator, seed=seed),
            final_model=replace(self.final_model, seed=seed),
        )
