"""Sanitizing, stratified splitting and train-only median imputation."""

import logging
from fractions import Fraction

import numpy as np
import pytest

from backend.src.data.dataset import Dataset
from backend.src.data.manifest import PMU_MEASUREMENT
from backend.src.data.preprocess import (
    DEFAULT_FRACTIONS,
    apply_imputer,
    fit_imputer,
    prepare_splits,
    sanitize,
    stratified_split,
)
from backend.src.errors import StratificationError, UsageError


def _dataset(values, labels=None):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if labels is None:
        labels = np.arange(values.shape[0]) % 2
    names = tuple(f"f{i}" for i in range(values.shape[1]))
    return Dataset(names, values, np.asarray(labels), (PMU_MEASUREMENT,) * len(names))


def _expected_counts(total, fractions):
    """Largest-remainder apportionment computed independently with fractions."""
    exact = [Fraction(total) * Fraction(f).limit_denominator(10_000) for f in fractions]
    counts = [int(q) for q in exact]
    remainders = [q - c for q, c in zip(exact, counts)]
    order = sorted(range(3), key=lambda i: (-remainders[i], i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


class TestSanitize:
    def test_infinities_become_missing(self):
        ds = sanitize(_dataset([1.0, np.inf, 3.0, -np.inf]))
        assert ds.values[0, 0] == 1.0
        assert np.isnan(ds.values[1, 0])
        assert ds.values[2, 0] == 3.0
        assert np.isnan(ds.values[3, 0])

    def test_finite_dataset_unchanged(self):
        ds = _dataset([1.0, 2.0])
        assert sanitize(ds) is ds


class TestImputer:
    def test_median_skips_missing(self):
        model = fit_imputer(_dataset([1.0, 2.0, np.nan, 4.0]), [0, 1, 2, 3])
        assert model.medians.tolist() == [2.0]

    def test_even_count_uses_midpoint(self):
        model = fit_imputer(_dataset([1.0, 2.0, 3.0, 4.0]), [0, 1, 2, 3])
        assert model.medians.tolist() == [2.5]

    def test_all_missing_column_falls_back_to_zero(self, caplog):
        ds = _dataset([[np.nan, 1.0], [np.nan, 3.0]], labels=[0, 1])
        with caplog.at_level(logging.WARNING):
            model = fit_imputer(ds, [0, 1])
        assert model.medians.tolist() == [0.0, 2.0]
        assert model.fallback_columns == (0,)
        assert "f0" in caplog.text

    def test_apply_substitutes_missing_cells(self):
        model = fit_imputer(_dataset([1.0, 2.0, 3.0]), [0, 1, 2])
        filled = apply_imputer(model, _dataset([np.nan, 5.0]))
        assert filled.values[:, 0].tolist() == [2.0, 5.0]

    def test_apply_without_missing_is_identity(self):
        model = fit_imputer(_dataset([1.0, 2.0]), [0, 1])
        ds = _dataset([7.0, 8.0])
        assert apply_imputer(model, ds) is ds

    def test_apply_twice_equals_apply_once(self, rng):
        values = rng.normal(size=(30, 4))
        values[rng.random(values.shape) < 0.3] = np.nan
        ds = _dataset(values)
        model = fit_imputer(ds, range(20))
        once = apply_imputer(model, ds)
        twice = apply_imputer(model, once)
        np.testing.assert_array_equal(twice.values, once.values)
        assert not np.isnan(twice.values).any()

    def test_arity_mismatch(self):
        model = fit_imputer(_dataset([1.0, 2.0]), [0, 1])
        with pytest.raises(UsageError):
            apply_imputer(model, _dataset([[1.0, 2.0]], labels=[0]))

    def test_empty_training_rows(self):
        with pytest.raises(UsageError):
            fit_imputer(_dataset([1.0, 2.0]), [])

    def test_validation_rows_use_training_median(self):
        # Rows 0-3 train, 4-5 validation; the column is missing only in validation
        values = [[1.0], [2.0], [3.0], [10.0], [np.nan], [np.nan]]
        ds = _dataset(values, labels=[0, 1, 0, 1, 0, 1])
        model = fit_imputer(ds, [0, 1, 2, 3])
        validation = apply_imputer(model, ds.subset_rows([4, 5]))
        assert validation.values[:, 0].tolist() == [2.5, 2.5]


class TestStratifiedSplit:
    def test_hand_computed_counts(self):
        labels = np.array([1] * 14 + [0] * 6)
        split = stratified_split(labels, DEFAULT_FRACTIONS, seed=0)
        per_class = [
            (int(np.sum(labels[part] == 1)), int(np.sum(labels[part] == 0)))
            for part in (split.train, split.validation, split.test)
        ]
        assert per_class == [(10, 4), (2, 1), (2, 1)]

    def test_benchmark_sized_class_totals(self):
        labels = np.array([1] * 55_663 + [0] * 22_714)
        split = stratified_split(labels, seed=42)
        parts = split.parts().values()
        assert sum(int(np.sum(labels[p] == 1)) for p in parts) == 55_663
        assert sum(int(np.sum(labels[p] == 0)) for p in parts) == 22_714

    def test_random_label_vectors(self, rng):
        for _ in range(1000):
            n = int(rng.integers(6, 200))
            labels = rng.integers(0, 2, size=n)
            if min(np.sum(labels == 0), np.sum(labels == 1)) < 3:
                continue
            fractions = DEFAULT_FRACTIONS
            seed = int(rng.integers(0, 2**31))
            split = stratified_split(labels, fractions, seed)

            combined = np.concatenate([split.train, split.validation, split.test])
            assert np.array_equal(np.sort(combined), np.arange(n))
            for code in (0, 1):
                parts = split.parts().values()
                counts = [int(np.sum(labels[p] == code)) for p in parts]
                total = int(np.sum(labels == code))
                assert counts == _expected_counts(total, fractions)

            again = stratified_split(labels, fractions, seed)
            assert np.array_equal(again.train, split.train)
            assert np.array_equal(again.test, split.test)

    def test_other_seed_permutes_with_same_counts(self):
        labels = np.array([1] * 60 + [0] * 40)
        first = stratified_split(labels, seed=1)
        second = stratified_split(labels, seed=2)
        assert not np.array_equal(first.train, second.train)
        assert first.train.size == second.train.size

    def test_tiny_class(self):
        with pytest.raises(StratificationError):
            stratified_split(np.array([1] * 10 + [0] * 2))

    def test_bad_fractions(self):
        with pytest.raises(UsageError):
            stratified_split(np.array([1] * 10 + [0] * 10), (0.5, 0.5, 0.5))


class TestLeakageGuard:
    def test_perturbing_held_out_cells_never_changes_imputer(self, rng):
        values = rng.normal(size=(60, 4))
        values[rng.random(values.shape) < 0.2] = np.nan
        labels = np.array([0, 1] * 30)
        ds = _dataset(values, labels)
        split = stratified_split(labels, seed=5)
        reference = fit_imputer(ds, split.train)

        held_out = np.concatenate([split.validation, split.test])
        for row in held_out:
            for column in range(values.shape[1]):
                for replacement in (np.nan, 1e6, -1e6):
                    perturbed = values.copy()
                    perturbed[row, column] = replacement
                    model = fit_imputer(_dataset(perturbed, labels), split.train)
                    assert np.array_equal(model.medians, reference.medians)


class TestPrepareSplits:
    def test_parts_are_complete_and_aligned(self, rng):
        values = rng.normal(size=(40, 3))
        values[0, 0] = np.inf
        values[5, 1] = np.nan
        ds = _dataset(values, [0, 1] * 20)
        splits = prepare_splits(ds, seed=7)
        for part in (splits.train, splits.validation, splits.test):
            assert np.isfinite(part.values).all()
        assert splits.train.n_samples + splits.validation.n_samples + (
            splits.test.n_samples
        ) == 40

    def test_subset_columns(self, easy_splits):
        subset = easy_splits.subset_columns([0, 2])
        assert subset.feature_names == (
            easy_splits.feature_names[0],
            easy_splits.feature_names[2],
        )
        assert subset.train.n_features == 2
        np.testing.assert_array_equal(
            subset.validation.values, easy_splits.validation.values[:, [0, 2]]
        )
