"""Shared pytest fixtures."""

import numpy as np
import pytest

from backend.src.data.preprocess import prepare_splits
from backend.src.data.synthetic import SyntheticSpec, generate_synthetic
from backend.src.detection.forest import ForestConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_forest():
    """Few shallow-ish trees: enough signal for tests, fast to grow."""
    return ForestConfig(n_trees=10, min_samples_leaf=3, seed=0)


@pytest.fixture
def make_splits():
    """Factory for prepared splits of a synthetic dataset."""

    def build(**spec_fields):
        ds = generate_synthetic(SyntheticSpec(**spec_fields))
        return prepare_splits(ds, seed=42)

    return build


@pytest.fixture
def easy_splits(make_splits):
    return make_splits(
        n_samples=400,
        n_informative=3,
        n_redundant=0,
        n_noise=5,
        class_balance=0.6,
        separation=2.5,
        seed=3,
    )
