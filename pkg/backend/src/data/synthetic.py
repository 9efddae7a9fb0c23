"""
Synthetic binary event datasets for running the pipeline without benchmark files.

Columns are laid out as informative (``inf_*``), redundant (``red_*``) and
noise (``noise_*``) features, in that order, all tagged pmu_measurement.
"""

from dataclasses import dataclass

import numpy as np

from backend.src.data.dataset import ATTACK, NATURAL, Dataset
from backend.src.data.manifest import PMU_MEASUREMENT
from backend.src.errors import UsageError


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and difficulty of a generated dataset."""

    n_samples: int = 1000
    n_informative: int = 5
    n_redundant: int = 5
    n_noise: int = 20
    class_balance: float = 0.7
    separation: float = 2.0
    seed: int = 0

    @property
    def n_features(self) -> int:
        return self.n_informative + self.n_redundant + self.n_noise

    def validate(self):
        if self.n_samples < 2:
            raise UsageError("n_samples must be at least 2")
        if min(self.n_informative, self.n_redundant, self.n_noise) < 0:
            raise UsageError("Feature counts must be non-negative")
        if self.n_features < 1:
            raise UsageError("Synthetic dataset needs at least one feature")
        if self.n_redundant and not self.n_informative:
            raise UsageError("Redundant features need informative ones to mix")
        if not 0.0 < self.class_balance < 1.0:
            raise UsageError("class_balance must lie strictly between 0 and 1")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """
    Draw a labelled dataset with a known signal structure.

    Informative columns are N(0, 1) for Natural rows and N(separation, 1) for
    Attack rows. Redundant columns are a fixed random linear mixture of the
    informative ones. Noise columns are N(0, 1) regardless of class.

    Args:
        spec: Sample count, column counts, balance, separation and seed

    Returns:
        Dataset whose rows are shuffled, identical for identical specs
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    n_pos = int(round(spec.class_balance * spec.n_samples))
    n_pos = min(max(n_pos, 1), spec.n_samples - 1)
    labels = np.full(spec.n_samples, NATURAL, dtype=np.int8)
    labels[:n_pos] = ATTACK
    labels = rng.permutation(labels)

    informative = rng.standard_normal((spec.n_samples, spec.n_informative))
    informative += spec.separation * labels[:, None]

    mixing = rng.standard_normal((spec.n_informative, spec.n_redundant))
    redundant = informative @ mixing

    noise = rng.standard_normal((spec.n_samples, spec.n_noise))

    names = (
        [f"inf_{i}" for i in range(spec.n_informative)]
        + [f"red_{i}" for i in range(spec.n_redundant)]
        + [f"noise_{i}" for i in range(spec.n_noise)]
    )
    values = np.hstack([informative, redundant, noise])
    return Dataset(
        tuple(names), values, labels, tuple([PMU_MEASUREMENT] * len(names))
    )
