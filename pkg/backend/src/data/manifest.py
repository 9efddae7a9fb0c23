"""
Feature manifest: maps every data column to its feature group.

The default manifest reproduces the column layout of the public MSU/ORNL
binary power-system attack release: four relays (R1-R4), each reporting 29
PMU/IED measurements, followed by 12 log columns. The last measurement of every
relay (``R#:S``) is the relay status flag.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values

from backend.src.errors import ManifestError

PMU_MEASUREMENT = "pmu_measurement"
RELAY_STATUS = "relay_status"
LOG = "log"

FEATURE_GROUPS = (PMU_MEASUREMENT, RELAY_STATUS, LOG)

RELAYS = ("R1", "R2", "R3", "R4")

# Measurement types read from column names; phasor channels 7-12 are the
# sequence components
MAGNITUDE = "magnitude"
ANGLE = "angle"
SEQUENCE = "sequence"
FREQUENCY = "frequency"
IMPEDANCE = "impedance"
STATUS = "status"
OTHER = "other"
MEASUREMENT_TYPES = (
    MAGNITUDE, ANGLE, SEQUENCE, FREQUENCY, IMPEDANCE, STATUS, LOG, OTHER
)  # fmt: skip

_PHASOR_NAME = re.compile(r"^(R\d+)-P([AM])(\d+):")
_RELAY_SCALAR_NAME = re.compile(r"^(R\d+)(?::(F|DF|S)|-PA:(Z|ZH))$")
_LOG_NAME = re.compile(r"^(control_panel_log\d+|relay\d+_log|snort_log\d+)$")

# Per-relay phasor columns: angle (PA) and magnitude (PM) for phase A-C
# voltages (1-3), phase A-C currents (4-6), sequence voltages (7-9) and
# sequence currents (10-12).
_PHASOR_CHANNELS = (
    (1, "V"), (2, "V"), (3, "V"),
    (4, "I"), (5, "I"), (6, "I"),
    (7, "V"), (8, "V"), (9, "V"),
    (10, "I"), (11, "I"), (12, "I"),
)  # fmt: skip


def relay_columns(relay: str) -> list[str]:
    """Return the 29 measurement column names of one relay, in file order."""
    columns = []
    for channel, quantity in _PHASOR_CHANNELS:
        columns.append(f"{relay}-PA{channel}:{quantity}H")
        columns.append(f"{relay}-PM{channel}:{quantity}")
    columns += [f"{relay}:F", f"{relay}:DF", f"{relay}-PA:Z", f"{relay}-PA:ZH"]
    columns.append(f"{relay}:S")
    return columns


def log_columns() -> list[str]:
    """Return the 12 control-panel, relay and Snort log column names."""
    columns = [f"control_panel_log{i}" for i in range(1, 5)]
    columns += [f"relay{i}_log" for i in range(1, 5)]
    columns += [f"snort_log{i}" for i in range(1, 5)]
    return columns


@dataclass(frozen=True)
class FeatureManifest:
    """Column name -> feature group mapping, in column order."""

    groups: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, group in self.groups.items():
            if group not in FEATURE_GROUPS:
                raise ManifestError(
                    f"Column '{name}' has unknown group '{group}' "
                    f"(expected one of {', '.join(FEATURE_GROUPS)})"
                )

    def __contains__(self, name: str) -> bool:
        return name in self.groups

    def __len__(self) -> int:
        return len(self.groups)

    def group_of(self, name: str) -> str:
        """
        Look up the group of a column.

        Raises:
            ManifestError: If the column is not part of the manifest
        """
        try:
            return self.groups[name]
        except KeyError:
            raise ManifestError(
                f"Column '{name}' is not in the feature manifest"
            ) from None

    def counts(self) -> dict[str, int]:
        """Number of columns per group (every group present, possibly 0)."""
        counts = dict.fromkeys(FEATURE_GROUPS, 0)
        for group in self.groups.values():
            counts[group] += 1
        return counts

    @classmethod
    def uniform(cls, names: list[str], group: str = PMU_MEASUREMENT):
        """Manifest tagging every listed column with the same group."""
        return cls({name: group for name in names})


def default_manifest() -> FeatureManifest:
    """
    Build the manifest of the 128 input columns of the binary dataset.

    Returns:
        Manifest with 112 pmu_measurement, 4 relay_status and 12 log columns

    Example:
        >>> default_manifest().counts()
        {'pmu_measurement': 112, 'relay_status': 4, 'log': 12}
    """
    groups: dict[str, str] = {}
    for relay in RELAYS:
        for name in relay_columns(relay):
            groups[name] = RELAY_STATUS if name == f"{relay}:S" else PMU_MEASUREMENT
    for name in log_columns():
        groups[name] = LOG
    return FeatureManifest(groups)


def load_manifest(path: Optional[str | Path]) -> FeatureManifest:
    """
    Read a flat ``<column>=<group>`` manifest file (one pair per line).

    Args:
        path: Manifest file, or None for the built-in default

    Returns:
        FeatureManifest preserving file order
    """
    if path is None:
        return default_manifest()
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"Manifest file not found: {path}")
    values = dotenv_values(path)
    missing = [name for name, group in values.items() if not group]
    if missing:
        raise ManifestError(f"Manifest entries without a group: {missing[:5]}")
    return FeatureManifest({name: group.strip() for name, group in values.items()})


def write_manifest(manifest: FeatureManifest, path: str | Path) -> Path:
    """Write the manifest in the flat format read by ``load_manifest``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{name}={group}" for name, group in manifest.groups.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def describe_column(name: str) -> tuple[str, str]:
    """
    Relay and measurement type of a column, read from its benchmark name.

    Example:
        >>> describe_column("R2-PM8:V")
        ('R2', 'sequence')
        >>> describe_column("snort_log3")
        ('other', 'log')
    """
    match = _PHASOR_NAME.match(name)
    if match:
        relay, kind, channel = match.groups()
        if int(channel) >= 7:
            return relay, SEQUENCE
        return relay, MAGNITUDE if kind == "M" else ANGLE
    match = _RELAY_SCALAR_NAME.match(name)
    if match:
        relay, scalar, impedance = match.groups()
        if impedance:
            return relay, IMPEDANCE
        return relay, STATUS if scalar == "S" else FREQUENCY
    if _LOG_NAME.match(name):
        return OTHER, LOG
    return OTHER, OTHER
