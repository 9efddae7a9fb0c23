"""
Experiment configuration.

A config file is a flat ``KEY=VALUE`` file, the same format as ``.env``.
Values are resolved in this order (first wins):

1. CLI overrides
2. Config file
3. ``GRIDGA_``-prefixed environment variables (a local ``.env`` is loaded)
4. Built-in defaults

Every value is parsed and checked up front, so a bad config fails before any
data is read or any file is written.
"""

import logging
import os
from collections.abc import Callable, Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, TypeVar

from dotenv import dotenv_values, load_dotenv

from backend.src.anomaly_detector import (
    EXTRA_TREES,
    MODEL_NAMES,
    TREE_MODELS,
    LogisticConfig,
    ModelSettings,
)
from backend.src.data.dataset import (
    DEFAULT_LABEL_COLUMN,
    DEFAULT_LABEL_MAP,
    FEATURE_SETS,
)
from backend.src.data.preprocess import DEFAULT_FRACTIONS
from backend.src.data.synthetic import SyntheticSpec
from backend.src.detection.forest import EXTRA, RANDOM_FOREST, ForestConfig
from backend.src.errors import ConfigError, UsageError
from backend.src.selection.config import GaConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = "GRIDGA_"

DEFAULT_GA_FEATURE_SET = "pmu_without_status"
DEFAULT_GA_SEEDS = (1, 2, 3, 4, 5)
DEFAULT_OUT_DIR = Path("results")

KNOWN_KEYS = frozenset(
    {
        "DATA_DIR",
        "DATA_GLOB",
        "MANIFEST",
        "LABEL_COLUMN",
        "LABEL_MAP",
        "SYNTH_N_SAMPLES",
        "SYNTH_N_INFORMATIVE",
        "SYNTH_N_REDUNDANT",
        "SYNTH_N_NOISE",
        "SYNTH_CLASS_BALANCE",
        "SYNTH_SEPARATION",
        "SYNTH_SEED",
        "SPLIT_FRACTIONS",
        "SPLIT_SEED",
        "FEATURE_SETS",
        "MODELS",
        "N_JOBS",
        "N_TREES",
        "MAX_FEATURES",
        "MAX_DEPTH",
        "MIN_SAMPLES_SPLIT",
        "MIN_SAMPLES_LEAF",
        "MODEL_SEED",
        "LOGISTIC_EPOCHS",
        "LOGISTIC_LEARNING_RATE",
        "LOGISTIC_L2",
        "GA_FEATURE_SET",
        "GA_SEEDS",
        "GA_POPULATION",
        "GA_GENERATIONS",
        "GA_ALPHA",
        "GA_TOURNAMENT_SIZE",
        "GA_CROSSOVER_RATE",
        "GA_MUTATION_RATE",
        "GA_ELITISM",
        "GA_MIN_FEATURES",
        "GA_INIT_PROB",
        "GA_EVALUATOR_TREES",
        "GA_FINAL_TREES",
        "GA_FINAL_MODEL",
        "OUT_DIR",
    }
)

T = TypeVar("T")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one CLI invocation needs; built by ``load_config``."""

    data_dir: Optional[Path] = None
    data_glob: str = "*.csv"
    manifest_path: Optional[Path] = None
    label_column: str = DEFAULT_LABEL_COLUMN
    label_map: Mapping[str, int] = field(
        default_factory=lambda: dict(DEFAULT_LABEL_MAP)
    )
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    split_fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    split_seed: int = 42
    feature_sets: tuple[str, ...] = tuple(FEATURE_SETS)
    models: tuple[str, ...] = MODEL_NAMES
    settings: ModelSettings = field(default_factory=ModelSettings)
    ga: GaConfig = field(default_factory=GaConfig)
    ga_feature_set: str = DEFAULT_GA_FEATURE_SET
    ga_seeds: tuple[int, ...] = DEFAULT_GA_SEEDS
    n_jobs: int = 1
    out_dir: Path = DEFAULT_OUT_DIR

    def __post_init__(self):
        if not self.models:
            raise ConfigError("The model roster is empty")
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise ConfigError(
                f"Unknown model(s) {unknown} (expected {', '.join(MODEL_NAMES)})"
            )
        if not self.feature_sets:
            raise ConfigError("No feature sets configured")
        for name in (*self.feature_sets, self.ga_feature_set):
            if name not in FEATURE_SETS:
                raise ConfigError(
                    f"Unknown feature set '{name}' "
                    f"(expected one of {', '.join(FEATURE_SETS)})"
                )
        if not self.ga_seeds:
            raise ConfigError("GA seed list is empty")
        if len(self.split_fractions) != 3 or any(
            f <= 0 for f in self.split_fractions
        ):
            raise ConfigError("SPLIT_FRACTIONS needs three positive fractions")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError(
                f"SPLIT_FRACTIONS must sum to 1, got {sum(self.split_fractions)}"
            )
        if self.n_jobs == 0:
            raise ConfigError("N_JOBS must be non-zero (use -1 for all cores)")

    @property
    def uses_synthetic(self) -> bool:
        return self.data_dir is None

    def to_dict(self) -> dict:
        """JSON-friendly echo of the configuration stored with every result."""
        forest = self.settings.forest
        logistic = self.settings.logistic
        ga = self.ga
        return {
            "data_dir": str(self.data_dir) if self.data_dir else None,
            "data_glob": self.data_glob,
            "manifest": str(self.manifest_path) if self.manifest_path else None,
            "label_column": self.label_column,
            "label_map": dict(self.label_map),
            "synthetic": asdict(self.synthetic) if self.uses_synthetic else None,
            "split_fractions": list(self.split_fractions),
            "split_seed": self.split_seed,
            "feature_sets": list(self.feature_sets),
            "models": list(self.models),
            "forest": {
                "n_trees": forest.n_trees,
                "max_features": forest.max_features,
                "max_depth": forest.max_depth,
                "min_samples_split": forest.min_samples_split,
                "min_samples_leaf": forest.min_samples_leaf,
                "seed": forest.seed,
            },
            "logistic": asdict(logistic),
            "ga": {
                "feature_set": self.ga_feature_set,
                "seeds": list(self.ga_seeds),
                "population_size": ga.population_size,
                "generations": ga.generations,
                "alpha": ga.alpha,
                "tournament_size": ga.tournament_size,
                "crossover_rate": ga.crossover_rate,
                "mutation_rate": ga.mutation_rate,
                "elitism_count": ga.elitism_count,
                "min_features": ga.min_features,
                "init_inclusion_prob": ga.init_inclusion_prob,
                "evaluator_trees": ga.evaluator.n_trees,
                "final_trees": ga.final_model.n_trees,
                "final_model": ga.final_model.mode,
            },
            "n_jobs": self.n_jobs,
            "out_dir": str(self.out_dir),
        }


def _parse(
    values: Mapping[str, str], key: str, cast: Callable[[str], T], default: T
) -> T:
    raw = values.get(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw.strip())
    except ValueError as e:
        raise ConfigError(f"Invalid value for {key}: '{raw}' ({e})") from None


def _optional_int(text: str) -> Optional[int]:
    return None if text.lower() in ("none", "auto") else int(text)


def _optional_float(text: str) -> Optional[float]:
    return None if text.lower() in ("none", "auto") else float(text)


def _names(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in _names(text))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in _names(text))


def parse_label_map(text: str) -> dict[str, int]:
    """Parse ``Attack:1,Natural:0`` into a marker -> class-code mapping."""
    mapping = {}
    for pair in _names(text):
        marker, sep, code = pair.rpartition(":")
        if not sep or not marker.strip():
            raise ValueError(f"expected marker:code, got '{pair}'")
        mapping[marker.strip()] = int(code)
    if not set(mapping.values()) <= {0, 1}:
        raise ValueError("class codes must be 0 or 1")
    return mapping


def _final_mode(text: str) -> str:
    if text not in TREE_MODELS:
        raise ValueError(f"expected one of {', '.join(TREE_MODELS)}")
    return EXTRA if text == EXTRA_TREES else RANDOM_FOREST


def _environment() -> dict[str, str]:
    load_dotenv()
    return {
        key[len(ENV_PREFIX) :]: value
        for key, value in os.environ.items()
        if key.startswith(ENV_PREFIX)
    }


def _normalize(values: Mapping[str, Optional[str]], source: str) -> dict[str, str]:
    normalized = {k.upper(): v for k, v in values.items() if v is not None}
    unknown = sorted(set(normalized) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"Unknown key(s) in {source}: {', '.join(unknown)}")
    return normalized


def build_config(values: Mapping[str, str]) -> ExperimentConfig:
    """Turn resolved string values into a validated ExperimentConfig."""
    n_jobs = _parse(values, "N_JOBS", int, 1)
    try:
        forest = ForestConfig(
            n_trees=_parse(values, "N_TREES", int, 300),
            max_features=_parse(values, "MAX_FEATURES", _optional_int, None),
            max_depth=_parse(values, "MAX_DEPTH", _optional_int, None),
            min_samples_split=_parse(values, "MIN_SAMPLES_SPLIT", int, 2),
            min_samples_leaf=_parse(values, "MIN_SAMPLES_LEAF", int, 1),
            seed=_parse(values, "MODEL_SEED", int, 0),
            n_jobs=n_jobs,
        )
        logistic = LogisticConfig(
            epochs=_parse(values, "LOGISTIC_EPOCHS", int, 10_000),
            learning_rate=_parse(values, "LOGISTIC_LEARNING_RATE", float, 1.0),
            l2=_parse(values, "LOGISTIC_L2", float, 1e-3),
            seed=_parse(values, "MODEL_SEED", int, 0),
        )
        final_mode = _parse(values, "GA_FINAL_MODEL", _final_mode, EXTRA)
        ga = GaConfig(
            population_size=_parse(values, "GA_POPULATION", int, 40),
            generations=_parse(values, "GA_GENERATIONS", int, 30),
            alpha=_parse(values, "GA_ALPHA", float, 0.95),
            tournament_size=_parse(values, "GA_TOURNAMENT_SIZE", int, 3),
            crossover_rate=_parse(values, "GA_CROSSOVER_RATE", float, 0.9),
            mutation_rate=_parse(values, "GA_MUTATION_RATE", _optional_float, None),
            elitism_count=_parse(values, "GA_ELITISM", int, 2),
            min_features=_parse(values, "GA_MIN_FEATURES", int, 5),
            init_inclusion_prob=_parse(values, "GA_INIT_PROB", float, 0.5),
            evaluator=ForestConfig(
                n_trees=_parse(values, "GA_EVALUATOR_TREES", int, 100),
                mode=EXTRA,
                n_jobs=1,
            ),
            final_model=ForestConfig(
                n_trees=_parse(values, "GA_FINAL_TREES", int, 300),
                mode=final_mode,
                n_jobs=n_jobs,
            ),
            n_jobs=n_jobs,
        )
        synthetic = SyntheticSpec(
            n_samples=_parse(values, "SYNTH_N_SAMPLES", int, 1000),
            n_informative=_parse(values, "SYNTH_N_INFORMATIVE", int, 5),
            n_redundant=_parse(values, "SYNTH_N_REDUNDANT", int, 5),
            n_noise=_parse(values, "SYNTH_N_NOISE", int, 20),
            class_balance=_parse(values, "SYNTH_CLASS_BALANCE", float, 0.7),
            separation=_parse(values, "SYNTH_SEPARATION", float, 2.0),
            seed=_parse(values, "SYNTH_SEED", int, 0),
        )
        synthetic.validate()
    except UsageError as e:
        raise ConfigError(str(e)) from None

    data_dir = _parse(values, "DATA_DIR", Path, None)
    manifest = _parse(values, "MANIFEST", Path, None)
    return ExperimentConfig(
        data_dir=data_dir,
        data_glob=_parse(values, "DATA_GLOB", str, "*.csv"),
        manifest_path=manifest,
        label_column=_parse(values, "LABEL_COLUMN", str, DEFAULT_LABEL_COLUMN),
        label_map=_parse(
            values, "LABEL_MAP", parse_label_map, dict(DEFAULT_LABEL_MAP)
        ),
        synthetic=synthetic,
        split_fractions=_parse(values, "SPLIT_FRACTIONS", _floats, DEFAULT_FRACTIONS),
        split_seed=_parse(values, "SPLIT_SEED", int, 42),
        feature_sets=_parse(values, "FEATURE_SETS", _names, tuple(FEATURE_SETS)),
        models=_parse(values, "MODELS", _names, MODEL_NAMES),
        settings=ModelSettings(forest=forest, logistic=logistic),
        ga=ga,
        ga_feature_set=_parse(values, "GA_FEATURE_SET", str, DEFAULT_GA_FEATURE_SET),
        ga_seeds=_parse(values, "GA_SEEDS", _ints, DEFAULT_GA_SEEDS),
        n_jobs=n_jobs,
        out_dir=_parse(values, "OUT_DIR", Path, DEFAULT_OUT_DIR),
    )


def load_config(
    path: Optional[str | Path] = None,
    overrides: Optional[Mapping[str, Optional[str]]] = None,
    use_environment: bool = True,
) -> ExperimentConfig:
    """
    Resolve an ExperimentConfig from defaults, environment, file and overrides.

    Args:
        path: Flat KEY=VALUE config file (optional)
        overrides: Values from the command line; None entries are ignored
        use_environment: Read ``GRIDGA_*`` variables (tests switch this off)

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: Missing file, unknown key or invalid value
    """
    values: dict[str, str] = {}
    if use_environment:
        values.update(
            {k: v for k, v in _environment().items() if k in KNOWN_KEYS}
        )
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        values.update(_normalize(dotenv_values(path), str(path)))
        logger.info("Loaded config from %s", path)
    values.update(_normalize(overrides or {}, "command-line overrides"))
    return build_config(values)
