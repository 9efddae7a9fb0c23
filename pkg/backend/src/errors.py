"""
Exception hierarchy for the grid anomaly toolkit.

Every error carries the exit code the CLI returns when it escapes a command.
"""


class GridAnomalyError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(GridAnomalyError):
    """Invalid or inconsistent experiment configuration."""

    exit_code = 2


class UsageError(GridAnomalyError, ValueError):
    """A library call was made with arguments that violate its preconditions."""

    exit_code = 2


class DataError(GridAnomalyError):
    """Input data could not be loaded or is unusable for the requested step."""

    exit_code = 3


class SchemaError(DataError):
    """CSV files disagree on their header, or a required column is missing."""


class LabelError(DataError):
    """A marker value has no entry in the label map."""


class ManifestError(DataError):
    """A data column has no group in the feature manifest."""


class StratificationError(DataError):
    """A class is too small to be split into train/validation/test parts."""


class TrainingError(DataError):
    """A model cannot be trained on the given data (e.g. only one class)."""


class DivergenceError(TrainingError):
    """Gradient descent produced a non-finite loss."""


class MetricUndefinedError(GridAnomalyError):
    """A metric is undefined for the given input (e.g. ROC-AUC on one class)."""

    exit_code = 4
