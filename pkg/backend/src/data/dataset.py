#!/usr/bin/env python3
"""
In-memory data model and CSV ingestion for PMU/IED event tables.

A Dataset is an N x d matrix of float64 values (NaN marks a missing cell,
infinities are kept as read), the column names, one feature group per column
and a binary label per row (1 = Attack, 0 = Natural).
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from backend.src.data.manifest import (
    FEATURE_GROUPS,
    LOG,
    PMU_MEASUREMENT,
    RELAY_STATUS,
    FeatureManifest,
    default_manifest,
)
from backend.src.errors import (
    DataError,
    LabelError,
    ManifestError,
    SchemaError,
    UsageError,
)

logger = logging.getLogger(__name__)

ATTACK = 1
NATURAL = 0

DEFAULT_LABEL_COLUMN = "marker"
DEFAULT_LABEL_MAP = {"Attack": ATTACK, "Natural": NATURAL}

# Feature set name -> groups it keeps
FEATURE_SETS = {
    "all": (PMU_MEASUREMENT, RELAY_STATUS, LOG),
    "pmu_only": (PMU_MEASUREMENT, RELAY_STATUS),
    "pmu_without_status": (PMU_MEASUREMENT,),
}


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with column names, group tags and binary labels."""

    feature_names: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray
    groups: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels)
        if values.ndim != 2 or labels.ndim != 1:
            raise UsageError("Dataset needs a 2-D matrix and a 1-D label vector")
        if values.shape[0] != labels.shape[0]:
            raise UsageError(
                f"Matrix has {values.shape[0]} rows but {labels.shape[0]} labels"
            )
        if not (values.shape[1] == len(self.feature_names) == len(self.groups)):
            raise UsageError(
                f"Column count mismatch: matrix {values.shape[1]}, "
                f"names {len(self.feature_names)}, groups {len(self.groups)}"
            )
        if labels.size and not np.isin(labels, (NATURAL, ATTACK)).all():
            raise UsageError("Labels must contain only the class codes 0 and 1")
        unknown = set(self.groups) - set(FEATURE_GROUPS)
        if unknown:
            raise UsageError(f"Unknown feature groups: {sorted(unknown)}")

        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def class_counts(self) -> dict[int, int]:
        """Number of rows per class code."""
        return {
            ATTACK: int(np.sum(self.labels == ATTACK)),
            NATURAL: int(np.sum(self.labels == NATURAL)),
        }

    def subset_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.feature_names, self.values[rows], self.labels[rows], self.groups
        )

    def subset_columns(self, columns: Sequence[int]) -> "Dataset":
        columns = np.asarray(columns, dtype=np.int64)
        return Dataset(
            tuple(self.feature_names[c] for c in columns),
            self.values[:, columns],
            self.labels,
            tuple(self.groups[c] for c in columns),
        )

    def with_values(self, values: np.ndarray) -> "Dataset":
        """Same columns and labels, new matrix."""
        return Dataset(self.feature_names, values, self.labels, self.groups)


def _read_table(path: Path) -> pd.DataFrame:
    # Everything is read as text; numeric parsing happens after the header check
    try:
        return pd.read_csv(
            path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8"
        )
    except UnicodeDecodeError as e:
        raise SchemaError(f"{path} is not valid UTF-8 text ({e.reason})") from None
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path} is empty (no header row)") from None
    except pd.errors.ParserError as e:
        raise SchemaError(f"Could not parse {path}: {e}") from None
    except OSError as e:
        raise DataError(f"Could not read {path}: {e}") from None


def _parse_numeric(column: pd.Series) -> np.ndarray:
    """Parse a text column; inf/-inf/nan are case-insensitive, junk becomes NaN."""
    cleaned = column.str.strip().str.lower()
    return pd.to_numeric(cleaned, errors="coerce").to_numpy(dtype=np.float64)


def load_csv(
    paths: Sequence[str | Path],
    manifest: Optional[FeatureManifest] = None,
    label_column: str = DEFAULT_LABEL_COLUMN,
    label_map: Optional[Mapping[str, int]] = None,
    n_jobs: int = 1,
) -> Dataset:
    """
    Load and concatenate PMU/IED event CSV files.

    Args:
        paths: CSV files, concatenated in the given order
        manifest: Column -> group mapping (default: 128-column benchmark layout)
        label_column: Name of the marker column holding the class
        label_map: Marker text -> class code (default: Attack -> 1, Natural -> 0)
        n_jobs: Files parsed concurrently (result order is always path order)

    Returns:
        Dataset with one row per data row of every file

    Raises:
        SchemaError: Unreadable file, header differs between files or label
            column missing
        DataError: A file cannot be opened
        LabelError: A marker value is not in label_map
        ManifestError: A data column is not in the manifest

    Example:
        >>> ds = load_csv(sorted(Path("data").glob("*.csv")))
        >>> ds.n_features
        128
    """
    if not paths:
        raise UsageError("load_csv needs at least one file")
    manifest = manifest if manifest is not None else default_manifest()
    label_map = {
        str(key).strip(): int(code)
        for key, code in (label_map or DEFAULT_LABEL_MAP).items()
    }
    if not set(label_map.values()) <= {NATURAL, ATTACK}:
        raise UsageError("label_map may only map onto the class codes 0 and 1")

    paths = [Path(p) for p in paths]
    frames = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_read_table)(path) for path in paths
    )

    header = list(frames[0].columns)
    for path, frame in zip(paths[1:], frames[1:]):
        if list(frame.columns) != header:
            raise SchemaError(f"Header of {path} differs from {paths[0]}")
    if label_column not in header:
        raise SchemaError(f"Label column '{label_column}' not found in {paths[0]}")

    feature_names = [name for name in header if name != label_column]
    missing = [name for name in feature_names if name not in manifest]
    if missing:
        raise ManifestError(
            f"{len(missing)} column(s) not in the feature manifest, "
            f"e.g. {missing[:5]}"
        )

    table = pd.concat(frames, ignore_index=True) if len(frames) > 1 else frames[0]

    markers = table[label_column].str.strip()
    labels = markers.map(label_map)
    if labels.isna().any():
        unmapped = sorted(markers[labels.isna()].unique())[:5]
        raise LabelError(f"Unmapped label value(s) in '{label_column}': {unmapped}")

    if feature_names:
        values = np.column_stack([_parse_numeric(table[n]) for n in feature_names])
    else:
        values = np.empty((len(table), 0))
    values = values.reshape(len(table), len(feature_names))

    logger.info(
        "Loaded %d rows x %d features from %d file(s)",
        len(table),
        len(feature_names),
        len(paths),
    )
    return Dataset(
        tuple(feature_names),
        values,
        labels.to_numpy(dtype=np.int8),
        tuple(manifest.group_of(name) for name in feature_names),
    )


def select_feature_set(ds: Dataset, set_name: str) -> Dataset:
    """
    Keep only the columns of one feature set, in their original order.

    Args:
        ds: Dataset with a group tag for every column
        set_name: "all", "pmu_only" or "pmu_without_status"

    Returns:
        Dataset restricted to the groups of the feature set
    """
    if set_name not in FEATURE_SETS:
        raise UsageError(
            f"Unknown feature set '{set_name}' "
            f"(expected one of {', '.join(FEATURE_SETS)})"
        )
    keep = FEATURE_SETS[set_name]
    columns = [i for i, group in enumerate(ds.groups) if group in keep]
    return ds.subset_columns(columns)


def write_csv(
    ds: Dataset, path: str | Path, label_column: str = DEFAULT_LABEL_COLUMN
) -> Path:
    """Write a Dataset as CSV with an Attack/Natural marker column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(ds.values, columns=list(ds.feature_names))
    frame[label_column] = np.where(ds.labels == ATTACK, "Attack", "Natural")
    frame.to_csv(path, index=False)
    return path
