"""Random forest for gel/non-gel segment classification.

Trees are grown on bootstrap samples with Gini splits over midpoints of
sorted distinct feature values. Everything is deterministic given the seed
and the row order of the training data: tree ``i`` draws from
``numpy.random.default_rng(seed + i)``, and split ties resolve to the lowest
feature index, then the lowest threshold.

A sample goes left at a node when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import write_atomic
from .features import FEATURE_SCHEMA_VERSION, N_FEATURES

MODEL_FORMAT_VERSION = 1


class ForestError(ValueError):
    pass


class EmptyDatasetError(ForestError):
    pass


class SingleClassError(ForestError):
    pass


class FeatureSchemaError(ForestError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 75
    features_per_split: int = int(math.isqrt(N_FEATURES))
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 1 <= self.features_per_split <= N_FEATURES:
            raise ValueError(f"features_per_split must be in [1, {N_FEATURES}]")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")


@dataclass(frozen=True)
class Thresholds:
    high_recall: float = 0.15
    balanced: float = 0.30
    high_precision: float = 0.60

    def __post_init__(self):
        if not 0 < self.high_recall <= self.balanced <= self.high_precision < 1:
            raise ValueError("thresholds must satisfy 0 < high_recall <= balanced <= high_precision < 1")

    def as_tuple(self):
        return self.high_recall, self.balanced, self.high_precision


@dataclass
class Tree:
    """Flat array form of one tree; ``feature[k] < 0`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            n = node[active]
            r = rows[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self, k: int = 0) -> dict:
        if self.feature[k] < 0:
            return {"p": float(self.value[k])}
        return {"f": int(self.feature[k]), "t": float(self.threshold[k]),
                "l": self.to_json(int(self.left[k])), "r": self.to_json(int(self.right[k]))}

    @classmethod
    def from_json(cls, obj: dict) -> Tree:
        feature, threshold, left, right, value = [], [], [], [], []
        stack = [(obj, None, None)]
        while stack:
            node, parent, side = stack.pop()
            k = len(feature)
            if parent is not None:
                (left if side == "l" else right)[parent] = k
            if "p" in node:
                feature.append(-1), threshold.append(0.0), value.append(float(node["p"]))
                left.append(-1), right.append(-1)
            else:
                feature.append(int(node["f"])), threshold.append(float(node["t"])), value.append(math.nan)
                left.append(-1), right.append(-1)
                stack.append((node["r"], k, "r"))
                stack.append((node["l"], k, "l"))
        return cls(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                   np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                   np.array(value, dtype=np.float64))


def _best_split(X, y, idx, features, min_leaf):
    """Best (score, feature, threshold) over ``features`` for the rows ``idx``."""
    n = len(idx)
    labels = y[idx]
    best = (-np.inf, -1, 0.0)
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        pos_left = np.cumsum(labels[order])[:-1]
        n_left = np.arange(1, n, dtype=np.float64)
        valid = xs[1:] > xs[:-1]
        if min_leaf > 1:
            valid &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        pos_total = pos_left[-1] + labels[order[-1]]
        neg_left = n_left - pos_left
        pos_right = pos_total - pos_left
        neg_right = (n - n_left) - pos_right
        score = (pos_left ** 2 + neg_left ** 2) / n_left + (pos_right ** 2 + neg_right ** 2) / (n - n_left)
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        if score[i] > best[0]:
            lo, hi = xs[i], xs[i + 1]
            t = (lo + hi) / 2.0
            if not lo <= t < hi:
                t = lo
            best = (float(score[i]), int(f), float(t))
    return best


def grow_tree(X: np.ndarray, y: np.ndarray, params: ForestParams, tree_index: int) -> Tree:
    """Grow tree ``tree_index`` of a forest on a bootstrap sample of (X, y)."""
    rng = np.random.default_rng(params.seed + tree_index)
    n = len(y)
    sample = rng.integers(0, n, size=n)
    yf = y.astype(np.float64)

    feature, threshold, left, right, value = [], [], [], [], []
    # preorder: the RNG is consumed node by node, left subtree first
    stack = [(sample, 0, None, None)]
    while stack:
        idx, depth, parent, side = stack.pop()
        k = len(feature)
        if parent is not None:
            (left if side == 0 else right)[parent] = k
        pos = float(yf[idx].sum())
        m = len(idx)
        feature.append(-1), threshold.append(0.0), left.append(-1), right.append(-1)
        value.append(pos / m)
        if pos == 0 or pos == m or m < 2 * params.min_leaf:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        feats = np.sort(rng.choice(N_FEATURES, size=params.features_per_split, replace=False))
        score, f, t = _best_split(X, yf, idx, feats, params.min_leaf)
        parent_score = (pos * pos + (m - pos) ** 2) / m
        if f < 0 or score <= parent_score * (1.0 + 1e-12):
            continue
        feature[k], threshold[k] = f, t
        go_left = X[idx, f] <= t
        stack.append((idx[~go_left], depth + 1, k, 1))
        stack.append((idx[go_left], depth + 1, k, 0))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value, dtype=np.float64))


def _grow_many(args):
    X, y, params, indices = args
    return [grow_tree(X, y, params, i) for i in indices]


@dataclass
class ForestModel:
    trees: list
    params: ForestParams
    feature_schema_version: str = FEATURE_SCHEMA_VERSION
    training_meta: dict = field(default_factory=dict)

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = X.reshape(1, -1) if single else X
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise FeatureSchemaError(f"expected {N_FEATURES} features, got shape {X.shape}")
        return X, single

    def predict_proba(self, X) -> np.ndarray | float:
        """Mean positive-leaf fraction over trees, for one vector or a matrix."""
        X, single = self._check(X)
        p = np.zeros(len(X))
        for tree in self.trees:
            p += tree.predict(X)
        p /= len(self.trees)
        return float(p[0]) if single else p

    def to_json(self) -> str:
        obj = {
            "version": MODEL_FORMAT_VERSION,
            "params": asdict(self.params),
            "feature_schema_version": self.feature_schema_version,
            "training_meta": self.training_meta,
            "trees": [t.to_json() for t in self.trees],
        }
        return json.dumps(obj, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ForestModel:
        obj = json.loads(text)
        if obj.get("version") != MODEL_FORMAT_VERSION:
            raise ForestError(f"unsupported forest model version {obj.get('version')!r}")
        if obj.get("feature_schema_version") != FEATURE_SCHEMA_VERSION:
            raise FeatureSchemaError(f"model feature schema {obj.get('feature_schema_version')!r} "
                                     f"does not match {FEATURE_SCHEMA_VERSION!r}")
        trees = [Tree.from_json(t) for t in obj["trees"]]
        for t in trees:
            if (t.feature >= N_FEATURES).any():
                raise FeatureSchemaError("tree references a feature index beyond the schema")
        return cls(trees, ForestParams(**obj["params"]), obj["feature_schema_version"],
                   obj.get("training_meta", {}))

    def save(self, path):
        write_atomic(path, self.to_json())

    @classmethod
    def load(cls, path) -> ForestModel:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def train_forest(X, y, params: ForestParams = ForestParams(), workers: int = 1) -> ForestModel:
    """Train a forest on rows ``X`` (n x 39) with boolean labels ``y`` (True = gel).

    ``workers`` > 1 grows trees in separate processes; the model is identical
    for any worker count.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDatasetError("training set is empty")
    if X.shape[1] != N_FEATURES:
        raise FeatureSchemaError(f"expected {N_FEATURES} features, got {X.shape[1]}")
    if len(y) != len(X):
        raise ForestError("X and y lengths differ")
    if not np.isfinite(X).all():
        raise ForestError("training features contain NaN or infinity")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise SingleClassError("training set contains a single class")

    indices = list(range(params.n_trees))
    if workers > 1 and params.n_trees > 1:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            grown = list(pool.map(_grow_many, [(X, y, params, c) for c in chunks]))
        by_index = {}
        for chunk, trees in zip(chunks, grown):
            by_index.update(zip(chunk, trees))
        trees = [by_index[i] for i in indices]
    else:
        trees = [grow_tree(X, y, params, i) for i in indices]
    meta = {"n_samples": len(y), "class_counts": {"gel": n_pos, "non-gel": len(y) - n_pos}}
    return ForestModel(trees, params, FEATURE_SCHEMA_VERSION, meta)


def predict_proba(model: ForestModel, fv) -> float | np.ndarray:
    return model.predict_proba(fv)


def classify(model: ForestModel, fv, threshold: float):
    """``predict_proba >= threshold``, elementwise for matrices."""
    p = model.predict_proba(fv)
    return p >= threshold
