#!/usr/bin/env python3
"""
Randomized decision-tree ensembles for binary attack/natural classification.

Two growth modes share one CART builder:

- ``extra`` (Extra Trees): every candidate feature gets one threshold drawn
  uniformly in [min, max) of its values at the node.
- ``random_forest``: every candidate feature is searched exhaustively over the
  midpoints of its sorted distinct values.

In both modes the split with the largest Gini impurity decrease wins. Each tree
owns a generator spawned from ``SeedSequence(seed)`` by tree index, so training
with any number of workers gives bit-identical models.

Tree growth and traversal run in numba-compiled kernels over a feature-major
copy of the training matrix; the first call in a fresh environment pays a
one-off compilation (cached on disk afterwards).
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from numba import njit

from backend.src.errors import TrainingError, UsageError

logger = logging.getLogger(__name__)

EXTRA = "extra"
RANDOM_FOREST = "random_forest"
MODES = (EXTRA, RANDOM_FOREST)

FORMAT_HEADER = "gridforest v1"

LEAF = -1

# SplitMix64 stream; each tree seeds its own state from its spawned generator
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_SHIFT_11 = np.uint64(11)
_SHIFT_27 = np.uint64(27)
_SHIFT_30 = np.uint64(30)
_SHIFT_31 = np.uint64(31)
_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _SHIFT_30)) * _MIX_1
    z = (z ^ (z >> _SHIFT_27)) * _MIX_2
    return z ^ (z >> _SHIFT_31)


@njit(cache=True)
def _next_unit(state):
    """Uniform draw in [0, 1)."""
    return np.float64(_next_u64(state) >> _SHIFT_11) * _UNIT


@njit(cache=True)
def _next_below(state, n):
    return np.int64(_next_u64(state) % np.uint64(n))


@njit(cache=True)
def _gini_decrease(n_left, pos_left, n, positives, min_samples_leaf):
    """Weighted Gini decrease n*G(parent) - n_l*G(left) - n_r*G(right)."""
    n_right = n - n_left
    if n_left < min_samples_leaf or n_right < min_samples_leaf:
        return -np.inf
    pos_right = positives - pos_left
    parent = 2.0 * positives * (n - positives) / n
    left = 2.0 * pos_left * (n_left - pos_left) / n_left
    right = 2.0 * pos_right * (n_right - pos_right) / n_right
    return parent - left - right


@njit(cache=True)
def _grow_kernel(
    Xt,
    y,
    rows,
    extra,
    max_features,
    min_samples_split,
    min_samples_leaf,
    max_depth,
    state,
):
    """
    Depth-first growth over a feature-major matrix ``Xt`` (d x N).

    Node rows live in one index buffer, partitioned in place so every node
    owns a contiguous slice. Node ids are assigned in pre-order.
    """
    n_rows = rows.shape[0]
    n_features = Xt.shape[0]
    capacity = 2 * n_rows

    feature = np.full(capacity, LEAF, dtype=np.int64)
    threshold = np.zeros(capacity)
    left = np.full(capacity, LEAF, dtype=np.int64)
    right = np.full(capacity, LEAF, dtype=np.int64)
    value = np.zeros(capacity)
    n_samples = np.zeros(capacity, dtype=np.int64)
    decrease = np.zeros(capacity)

    index = rows.copy()
    order = np.arange(n_features)
    column = np.empty(n_rows)
    labels = np.empty(n_rows, dtype=np.int64)

    stack_start = np.empty(capacity, dtype=np.int64)
    stack_end = np.empty(capacity, dtype=np.int64)
    stack_depth = np.empty(capacity, dtype=np.int64)
    stack_parent = np.empty(capacity, dtype=np.int64)
    stack_is_left = np.zeros(capacity, dtype=np.bool_)
    stack_start[0] = 0
    stack_end[0] = n_rows
    stack_depth[0] = 0
    stack_parent[0] = -1
    top = 1
    n_nodes = 0

    while top > 0:
        top -= 1
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        parent = stack_parent[top]

        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if stack_is_left[top]:
                left[parent] = node
            else:
                right[parent] = node

        n = end - start
        positives = 0
        for k in range(start, end):
            positives += y[index[k]]
        value[node] = positives / n
        n_samples[node] = n

        if positives == 0 or positives == n:
            continue
        if n < min_samples_split or n < 2 * min_samples_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        best_feature = -1
        best_threshold = 0.0
        best_decrease = -np.inf
        found = 0
        drawn = 0
        # Features constant at the node do not count towards max_features
        while found < max_features and drawn < n_features:
            pick = drawn + _next_below(state, n_features - drawn)
            f = order[pick]
            order[pick] = order[drawn]
            order[drawn] = f
            drawn += 1

            low = Xt[f, index[start]]
            high = low
            for k in range(start + 1, end):
                v = Xt[f, index[k]]
                if v < low:
                    low = v
                elif v > high:
                    high = v
            if high <= low:
                continue
            found += 1

            if extra:
                cut = low + _next_unit(state) * (high - low)
                n_left = 0
                pos_left = 0
                for k in range(start, end):
                    if Xt[f, index[k]] < cut:
                        n_left += 1
                        pos_left += y[index[k]]
                gain = _gini_decrease(n_left, pos_left, n, positives, min_samples_leaf)
                # Strict comparison: earlier-drawn features win ties
                if gain > best_decrease:
                    best_decrease = gain
                    best_feature = f
                    best_threshold = cut
            else:
                for k in range(n):
                    column[k] = Xt[f, index[start + k]]
                    labels[k] = y[index[start + k]]
                sorter = np.argsort(column[:n], kind="mergesort")
                pos_left = 0
                for i in range(n - 1):
                    pos_left += labels[sorter[i]]
                    below = column[sorter[i]]
                    above = column[sorter[i + 1]]
                    # Only cut between distinct values
                    if above <= below:
                        continue
                    gain = _gini_decrease(
                        i + 1, pos_left, n, positives, min_samples_leaf
                    )
                    if gain > best_decrease:
                        best_decrease = gain
                        best_feature = f
                        midpoint = (below + above) / 2
                        best_threshold = midpoint if midpoint > below else above

        if best_feature < 0:
            continue
        feature[node] = best_feature
        threshold[node] = best_threshold
        decrease[node] = best_decrease

        lo = start
        hi = end - 1
        while lo <= hi:
            if Xt[best_feature, index[lo]] < best_threshold:
                lo += 1
            else:
                swap = index[lo]
                index[lo] = index[hi]
                index[hi] = swap
                hi -= 1

        # Right pushed first so the left subtree gets the next ids
        stack_start[top] = lo
        stack_end[top] = end
        stack_depth[top] = depth + 1
        stack_parent[top] = node
        stack_is_left[top] = False
        top += 1
        stack_start[top] = start
        stack_end[top] = lo
        stack_depth[top] = depth + 1
        stack_parent[top] = node
        stack_is_left[top] = True
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        n_samples[:n_nodes].copy(),
        decrease[:n_nodes].copy(),
    )


@njit(cache=True)
def _apply_kernel(X, feature, threshold, left, right):
    leaves = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        leaves[i] = node
    return leaves


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters of a tree ensemble (defaults follow the cited algorithms)."""

    n_trees: int = 300
    mode: str = EXTRA
    max_features: Optional[int] = None  # None -> floor(sqrt(d')), at least 1
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_depth: Optional[int] = None
    bootstrap: Optional[bool] = None  # None -> False for extra, True for RF
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise UsageError("n_trees must be at least 1")
        if self.mode not in MODES:
            raise UsageError(f"Unknown forest mode '{self.mode}'")
        if self.max_features is not None and self.max_features < 1:
            raise UsageError("max_features must be at least 1")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise UsageError("min_samples_split >= 2 and min_samples_leaf >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise UsageError("max_depth must be non-negative")

    @property
    def use_bootstrap(self) -> bool:
        if self.bootstrap is None:
            return self.mode == RANDOM_FOREST
        return self.bootstrap

    def resolve_max_features(self, n_features: int) -> int:
        """Candidate features per split for a d'-column training matrix."""
        if self.max_features is None:
            return max(1, math.isqrt(n_features))
        if self.max_features > n_features:
            raise UsageError(
                f"max_features={self.max_features} exceeds {n_features} features"
            )
        return self.max_features


@dataclass(frozen=True)
class TreeNode:
    """One node of a grown tree; ``feature == -1`` marks a leaf."""

    feature: int
    threshold: float
    left: int
    right: int
    value: float
    n_samples: int

    @property
    def is_leaf(self) -> bool:
        return self.feature == LEAF


@dataclass(frozen=True)
class Tree:
    """
    A grown tree stored as parallel node arrays in pre-order (root = 0).

    Internal nodes send ``x[feature] < threshold`` left and the rest right.
    ``value`` holds the positive-class fraction of the training rows that
    reached the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def node(self, index: int) -> TreeNode:
        return TreeNode(
            int(self.feature[index]),
            float(self.threshold[index]),
            int(self.left[index]),
            int(self.right[index]),
            float(self.value[index]),
            int(self.n_samples[index]),
        )

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        return _apply_kernel(
            np.ascontiguousarray(X, dtype=np.float64),
            self.feature,
            self.threshold,
            self.left,
            self.right,
        )

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise UsageError("Feature matrix must be 2-D")
    if np.isnan(X).any():
        raise UsageError("Feature matrix contains missing values; impute first")
    return X


def _grow(
    Xt: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    cfg: ForestConfig,
    rng: np.random.Generator,
) -> Tree:
    state = np.array([rng.integers(0, 2**63 - 1)], dtype=np.uint64)
    max_depth = -1 if cfg.max_depth is None else cfg.max_depth
    arrays = _grow_kernel(
        Xt,
        y,
        rows,
        cfg.mode == EXTRA,
        cfg.resolve_max_features(Xt.shape[0]),
        cfg.min_samples_split,
        cfg.min_samples_leaf,
        max_depth,
        state,
    )
    return Tree(*arrays)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    cfg: ForestConfig,
    rng: np.random.Generator,
) -> Tree:
    """
    Grow one unpruned CART tree on the given rows.

    A node becomes a leaf when it is pure, has fewer than min_samples_split
    rows, sits at max_depth, or admits no two-way split honouring
    min_samples_leaf.

    Args:
        X: Complete feature matrix (no missing values)
        y: Binary labels
        rows: Training rows for this tree (repeats allowed for bootstrap)
        cfg: Forest configuration (mode, max_features, stopping rules)
        rng: The tree's own generator

    Returns:
        Tree with pre-order node arrays
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise UsageError("grow_tree needs at least one row")
    X = _check_matrix(X)
    Xt = np.ascontiguousarray(X.T)
    return _grow(Xt, np.asarray(y).astype(np.int64), rows, cfg, rng)


def _grow_seeded(Xt, y, cfg: ForestConfig, seed_seq: np.random.SeedSequence) -> Tree:
    rng = np.random.default_rng(seed_seq)
    n = Xt.shape[1]
    if cfg.use_bootstrap:
        rows = rng.integers(0, n, size=n)
    else:
        rows = np.arange(n, dtype=np.int64)
    return _grow(Xt, y, rows, cfg, rng)


@dataclass(frozen=True)
class ForestModel:
    """Trained ensemble; scores are mean leaf positive-class fractions."""

    trees: tuple[Tree, ...]
    config: ForestConfig
    n_features: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = _check_matrix(X)
        if X.shape[1] != self.n_features:
            raise UsageError(
                f"Model trained on {self.n_features} features, got {X.shape[1]}"
            )
        total = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            total += tree.predict_proba(X)
        return total / len(self.trees)

    def feature_importances(self) -> np.ndarray:
        """Mean normalized impurity decrease per feature across trees."""
        importances = np.zeros(self.n_features, dtype=np.float64)
        for tree in self.trees:
            internal = tree.feature != LEAF
            per_tree = np.bincount(
                tree.feature[internal],
                weights=tree.impurity_decrease[internal],
                minlength=self.n_features,
            )
            if per_tree.sum() > 0:
                importances += per_tree / per_tree.sum()
        return importances / len(self.trees)


def train_forest(X: np.ndarray, y: np.ndarray, cfg: ForestConfig) -> ForestModel:
    """
    Train an Extra Trees or Random Forest ensemble.

    Args:
        X: N x d' complete feature matrix
        y: Binary labels with both classes present
        cfg: Forest configuration

    Returns:
        ForestModel, identical for identical (X, y, cfg) whatever cfg.n_jobs is

    Raises:
        TrainingError: No feature columns, fewer than two rows or a single class

    Example:
        >>> model = train_forest(X_train, y_train, ForestConfig(n_trees=100))
        >>> scores = model.predict_proba(X_val)
    """
    X = _check_matrix(X)
    y = np.asarray(y).astype(np.int64)
    if X.shape[0] != y.shape[0]:
        raise UsageError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if X.shape[1] == 0:
        raise TrainingError("Training a forest needs at least one feature column")
    if X.shape[0] < 2:
        raise TrainingError("Training a forest needs at least two rows")
    if np.unique(y).size < 2:
        raise TrainingError("Training data contains a single class")
    cfg.resolve_max_features(X.shape[1])

    # Feature-major copy: the split scans walk one column at a time
    Xt = np.ascontiguousarray(X.T)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    if cfg.n_jobs == 1:
        trees = [_grow_seeded(Xt, y, cfg, child) for child in children]
    else:
        trees = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_grow_seeded)(Xt, y, cfg, child) for child in children
        )
    logger.debug(
        "Grew %d %s trees on %d x %d", cfg.n_trees, cfg.mode, X.shape[0], X.shape[1]
    )
    return ForestModel(tuple(trees), cfg, X.shape[1])


def predict_proba(model, X: np.ndarray) -> np.ndarray:
    """Positive-class scores in [0, 1] for every row of X (forest or linear)."""
    return model.predict_proba(X)


def predict_label(model, X: np.ndarray, threshold: float) -> np.ndarray:
    """Label 1 (Attack) wherever the score reaches ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise UsageError(f"threshold must lie in [0, 1], got {threshold}")
    return (model.predict_proba(X) >= threshold).astype(np.int8)


def save_forest(model: ForestModel, path: str | Path) -> Path:
    """
    Write a forest in the versioned text format.

    Layout: the ``gridforest v1`` header, one JSON line with the config and
    feature count, then per tree a ``tree <n_nodes>`` line followed by its
    nodes in pre-order: ``N <feature> <threshold> <decrease> <value> <n>`` for
    internal nodes and ``L <value> <n>`` for leaves.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        FORMAT_HEADER,
        json.dumps(
            {"config": asdict(model.config), "n_features": model.n_features},
            sort_keys=True,
        ),
    ]
    for tree in model.trees:
        lines.append(f"tree {tree.n_nodes}")
        for i in range(tree.n_nodes):
            if tree.feature[i] == LEAF:
                lines.append(f"L {float(tree.value[i])!r} {int(tree.n_samples[i])}")
            else:
                lines.append(
                    f"N {int(tree.feature[i])} {float(tree.threshold[i])!r} "
                    f"{float(tree.impurity_decrease[i])!r} "
                    f"{float(tree.value[i])!r} {int(tree.n_samples[i])}"
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _parse_tree(entries: list[list[str]]) -> Tree:
    n = len(entries)
    feature = np.full(n, LEAF, dtype=np.int64)
    threshold = np.zeros(n, dtype=np.float64)
    left = np.full(n, LEAF, dtype=np.int64)
    right = np.full(n, LEAF, dtype=np.int64)
    value = np.zeros(n, dtype=np.float64)
    n_samples = np.zeros(n, dtype=np.int64)
    decrease = np.zeros(n, dtype=np.float64)
    pending: list[tuple[int, bool]] = []
    for i, entry in enumerate(entries):
        if pending:
            parent, is_left = pending.pop()
            (left if is_left else right)[parent] = i
        if entry[0] == "N":
            feature[i] = int(entry[1])
            threshold[i] = float(entry[2])
            decrease[i] = float(entry[3])
            value[i] = float(entry[4])
            n_samples[i] = int(entry[5])
            pending.append((i, False))
            pending.append((i, True))
        elif entry[0] == "L":
            value[i] = float(entry[1])
            n_samples[i] = int(entry[2])
        else:
            raise UsageError(f"Malformed node line: {' '.join(entry)}")
    return Tree(feature, threshold, left, right, value, n_samples, decrease)


def load_forest(path: str | Path) -> ForestModel:
    """Read a forest written by ``save_forest``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise UsageError(f"{path} is not a '{FORMAT_HEADER}' file")
    meta = json.loads(lines[1])
    trees = []
    cursor = 2
    while cursor < len(lines):
        tag, count = lines[cursor].split()
        if tag != "tree":
            raise UsageError(f"Expected a tree header, got '{lines[cursor]}'")
        count = int(count)
        entries = [line.split() for line in lines[cursor + 1 : cursor + 1 + count]]
        trees.append(_parse_tree(entries))
        cursor += 1 + count
    return ForestModel(tuple(trees), ForestConfig(**meta["config"]), meta["n_features"])
