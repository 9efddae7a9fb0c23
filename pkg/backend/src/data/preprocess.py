"""
Leakage-free preprocessing: non-finite sanitization, training-median
imputation and stratified train/validation/test splitting.

The pipeline order is fixed: sanitize -> split -> fit imputer on the training
rows -> apply the imputer to every part.
"""

import logging
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from backend.src.data.dataset import Dataset
from backend.src.errors import StratificationError, UsageError

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
MIN_CLASS_SIZE = 3
FALLBACK_MEDIAN = 0.0


@dataclass(frozen=True)
class ImputationModel:
    """Per-feature training medians (fallback 0.0 for all-missing columns)."""

    medians: np.ndarray
    fallback_columns: tuple[int, ...] = ()

    @property
    def n_features(self) -> int:
        return self.medians.shape[0]


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint, exhaustive train/validation/test row indices."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def parts(self) -> dict[str, np.ndarray]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


@dataclass(frozen=True)
class PreparedSplits:
    """Imputed train/validation/test datasets produced by ``prepare_splits``."""

    train: Dataset
    validation: Dataset
    test: Dataset
    indices: SplitIndices
    imputer: ImputationModel
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.train.feature_names

    def subset_columns(self, columns: Sequence[int]) -> "PreparedSplits":
        """Restrict all three parts to the given columns."""
        columns = np.asarray(columns, dtype=np.int64)
        return PreparedSplits(
            self.train.subset_columns(columns),
            self.validation.subset_columns(columns),
            self.test.subset_columns(columns),
            self.indices,
            ImputationModel(self.imputer.medians[columns]),
            self.notes,
        )


def sanitize(ds: Dataset) -> Dataset:
    """Replace every +inf/-inf cell with a missing value (NaN)."""
    values = ds.values
    infinite = np.isinf(values)
    if not infinite.any():
        return ds
    logger.info("Replacing %d infinite cell(s) with missing values", infinite.sum())
    return ds.with_values(np.where(infinite, np.nan, values))


def fit_imputer(ds: Dataset, rows: Sequence[int]) -> ImputationModel:
    """
    Compute per-column medians over the finite values of the training rows.

    Even-sized samples use the midpoint of the two central values. A column
    with no finite training value gets 0.0 and a logged warning.

    Args:
        ds: Sanitized dataset
        rows: Training row indices (the only rows that influence the model)

    Returns:
        ImputationModel with one finite median per column
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise UsageError("fit_imputer needs at least one training row")

    train = ds.values[rows]
    train = np.where(np.isfinite(train), train, np.nan)
    with warnings.catch_warnings():
        # All-NaN columns are handled below
        warnings.simplefilter("ignore", category=RuntimeWarning)
        medians = np.nanmedian(train, axis=0)

    empty = np.flatnonzero(np.isnan(medians))
    for column in empty:
        logger.warning(
            "Column '%s' has no finite training value; imputing %.1f",
            ds.feature_names[column],
            FALLBACK_MEDIAN,
        )
    medians = np.where(np.isnan(medians), FALLBACK_MEDIAN, medians)
    medians.setflags(write=False)
    return ImputationModel(medians, tuple(int(c) for c in empty))


def apply_imputer(model: ImputationModel, ds: Dataset) -> Dataset:
    """Fill every missing cell with its column's training median."""
    if model.n_features != ds.n_features:
        raise UsageError(
            f"Imputer fitted on {model.n_features} columns, "
            f"dataset has {ds.n_features}"
        )
    missing = np.isnan(ds.values)
    if not missing.any():
        return ds
    return ds.with_values(np.where(missing, model.medians[None, :], ds.values))


def _largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Apportion ``total`` by fractions, leftovers to the largest remainders."""
    quotas = [total * f for f in fractions]
    counts = [int(np.floor(q + 1e-9)) for q in quotas]
    leftover = total - sum(counts)
    # Stable sort: equal remainders favour the earlier part
    order = sorted(range(len(fractions)), key=lambda i: -(quotas[i] - counts[i]))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def stratified_split(
    labels: Sequence[int],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 42,
) -> SplitIndices:
    """
    Split row indices into train/validation/test parts, class by class.

    Each class's rows are shuffled with a generator seeded by ``seed`` and cut
    by largest-remainder apportionment of ``fractions``; the per-class parts
    are merged and sorted.

    Args:
        labels: Binary label vector
        fractions: (train, validation, test) fractions summing to 1
        seed: Shuffle seed

    Returns:
        SplitIndices

    Raises:
        StratificationError: A class has fewer than 3 members
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0:
        raise UsageError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"fractions must sum to 1, got {sum(fractions)}")

    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for code in (0, 1):
        members = np.flatnonzero(labels == code)
        if members.size < MIN_CLASS_SIZE:
            raise StratificationError(
                f"Class {code} has {members.size} member(s); "
                f"at least {MIN_CLASS_SIZE} are needed for a three-way split"
            )
        members = rng.permutation(members)
        bounds = np.cumsum(_largest_remainder(members.size, fractions))
        for part, chunk in zip(parts, np.split(members, bounds[:-1])):
            part.append(chunk)

    train, validation, test = (np.sort(np.concatenate(p)) for p in parts)
    return SplitIndices(train, validation, test)


def prepare_splits(
    ds: Dataset,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 42,
) -> PreparedSplits:
    """
    Run the full preprocessing pipeline on a dataset.

    Args:
        ds: Raw dataset (may contain infinities and missing cells)
        fractions: Split fractions
        seed: Split seed

    Returns:
        PreparedSplits whose parts contain no missing values
    """
    clean = sanitize(ds)
    indices = stratified_split(clean.labels, fractions, seed)
    imputer = fit_imputer(clean, indices.train)
    logger.info(
        "Split %d rows into train=%d, validation=%d, test=%d",
        clean.n_samples,
        indices.train.size,
        indices.validation.size,
        indices.test.size,
    )
    notes = tuple(
        f"column '{clean.feature_names[c]}' imputed with {FALLBACK_MEDIAN}"
        for c in imputer.fallback_columns
    )
    return PreparedSplits(
        apply_imputer(imputer, clean.subset_rows(indices.train)),
        apply_imputer(imputer, clean.subset_rows(indices.validation)),
        apply_imputer(imputer, clean.subset_rows(indices.test)),
        indices,
        imputer,
        notes,
    )
