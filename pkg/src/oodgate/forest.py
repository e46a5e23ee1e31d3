"""Extremely Randomized Trees for binary fundus / non-fundus classification.

Each tree is grown on the full training set (no bootstrap). At every node K
distinct features are drawn, one threshold is drawn uniformly between the
node's min and max for each, and the candidate with the lowest weighted Gini
impurity wins. Trees are stored as flat node arrays, which is also the layout
of the binary model file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from oodgate.errors import SchemaMismatchError, SingleClassError, TooFewSamplesError, ValidationError
from oodgate.features import FEATURE_NAMES, N_FEATURES, SCHEMA_VERSION

LEAF = -1


@dataclass(frozen=True)
class Hyperparameters:
    n_estimators: int = 100
    max_depth: int = 10
    min_samples_split: int = 10
    min_samples_leaf: int = 2
    max_features: int = math.ceil(math.sqrt(N_FEATURES))
    class_weight: str = "none"  # or "balanced"

    def __post_init__(self):
        if self.class_weight not in ("none", "balanced"):
            raise ValidationError(f"class_weight must be 'none' or 'balanced', got {self.class_weight!r}")

    def as_dict(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "class_weight": self.class_weight,
        }


@dataclass(frozen=True, eq=False)
class Tree:
    """One decision tree as parallel node arrays.

    ``feature[i] == -1`` marks a leaf; leaves point ``left``/``right`` at
    themselves so that batch traversal can run a fixed number of steps.
    ``counts[i]`` holds the (non-fundus, fundus) training samples reaching node
    ``i`` and ``value[i]`` the node's P(fundus).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def cover(self, node: int) -> float:
        return float(self.counts[node].sum())

    def depths(self) -> np.ndarray:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return depth

    def max_depth(self) -> int:
        return int(self.depths().max())

    def predict_one(self, x) -> float:
        node = 0
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        while feature[node] != LEAF:
            node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        return float(self.value[node])

    @classmethod
    def from_nodes(cls, nodes: list[tuple]) -> Tree:
        """Build from ``(feature, threshold, left, right, n_neg, n_pos, value)`` tuples."""
        feature = np.array([n[0] for n in nodes], dtype=np.int32)
        threshold = np.array([n[1] for n in nodes], dtype=np.float64)
        left = np.array([n[2] for n in nodes], dtype=np.int32)
        right = np.array([n[3] for n in nodes], dtype=np.int32)
        counts = np.array([(n[4], n[5]) for n in nodes], dtype=np.int64).reshape(-1, 2)
        value = np.array([n[6] for n in nodes], dtype=np.float64)
        leaves = feature == LEAF
        idx = np.arange(len(nodes), dtype=np.int32)
        left[leaves] = idx[leaves]
        right[leaves] = idx[leaves]
        threshold[leaves] = 0.0
        return cls(feature, threshold, left, right, counts, value)

    @classmethod
    def single_leaf(cls, value: float, counts=(1, 1)) -> Tree:
        return cls.from_nodes([(LEAF, 0.0, 0, 0, counts[0], counts[1], value)])


@dataclass(eq=False)
class ExtraTreesModel:
    trees: list[Tree]
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    training_seed: int = 0
    feature_names: tuple[str, ...] = FEATURE_NAMES
    schema_version: int = SCHEMA_VERSION
    classes: tuple[int, int] = (0, 1)

    def __post_init__(self):
        self._flat = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _flatten(self):
        if self._flat is None:
            sizes = [t.n_nodes for t in self.trees]
            offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
            feature = np.concatenate([t.feature for t in self.trees]).astype(np.int64)
            threshold = np.concatenate([t.threshold for t in self.trees])
            left = np.concatenate([t.left + o for t, o in zip(self.trees, offsets)]).astype(np.int64)
            right = np.concatenate([t.right + o for t, o in zip(self.trees, offsets)]).astype(np.int64)
            value = np.concatenate([t.value for t in self.trees])
            # a leaf's feature index is never used for a decision; point it at 0
            safe_feature = np.where(feature == LEAF, 0, feature)
            self._flat = (offsets, safe_feature, feature != LEAF, threshold, left, right, value)
        return self._flat

    def leaf_values(self, X) -> np.ndarray:
        """Per-tree leaf values, shape ``(n_samples, n_trees)``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaMismatchError(f"expected {self.n_features} features, got shape {X.shape}")
        if not np.isfinite(X).all():
            raise ValidationError("feature values must be finite")
        roots, feature, internal, threshold, left, right, value = self._flatten()
        nodes = np.broadcast_to(roots, (len(X), len(roots))).copy()
        rows = np.arange(len(X))[:, None]
        while True:
            active = internal[nodes]
            if not active.any():
                break
            go_left = X[rows, feature[nodes]] <= threshold[nodes]
            nodes = np.where(go_left, left[nodes], right[nodes])
        return value[nodes]

    def predict_proba(self, X) -> np.ndarray:
        """P(fundus) for each row of ``X``: mean of the per-tree leaf values."""
        return self.leaf_values(X).mean(axis=1)

    def structurally_equal(self, other: ExtraTreesModel) -> bool:
        if len(self.trees) != len(other.trees):
            return False
        for a, b in zip(self.trees, other.trees):
            for name in ("feature", "threshold", "left", "right", "counts", "value"):
                if not np.array_equal(getattr(a, name), getattr(b, name)):
                    return False
        return True


def _as_matrix(x) -> np.ndarray:
    values = getattr(x, "values", x)
    return np.asarray(values, dtype=np.float64)


def predict_probability(model: ExtraTreesModel, x) -> float:
    """P(fundus) for one feature vector (``FeatureVector`` or 39 reals)."""
    v = _as_matrix(x)
    if v.ndim != 1 or v.shape[0] != model.n_features:
        raise SchemaMismatchError(f"expected {model.n_features} features, got shape {v.shape}")
    return float(model.predict_proba(v[None, :])[0])


def _gini_children(left_w: np.ndarray, left_pos: np.ndarray, total_w: float, total_pos: float) -> np.ndarray:
    """Weighted Gini impurity of (left, right) children per candidate column."""
    right_w = total_w - left_w
    right_pos = total_pos - left_pos
    with np.errstate(invalid="ignore", divide="ignore"):
        pl = np.where(left_w > 0, left_pos / left_w, 0.0)
        pr = np.where(right_w > 0, right_pos / right_w, 0.0)
    gini_l = 2.0 * pl * (1.0 - pl)
    gini_r = 2.0 * pr * (1.0 - pr)
    return (left_w * gini_l + right_w * gini_r) / total_w


def _grow_tree(X: np.ndarray, y: np.ndarray, w: np.ndarray, hp: Hyperparameters, rng: np.random.Generator) -> Tree:
    n_features = X.shape[1]
    k = min(hp.max_features, n_features)
    nodes: list[list] = []
    # (sample indices, depth, parent slot, is_left)
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node_id = len(nodes)
        if parent >= 0:
            nodes[parent][2 if is_left else 3] = node_id
        yi = y[idx]
        n_pos = int(yi.sum())
        n_neg = len(idx) - n_pos
        wi = w[idx]
        total_w = float(wi.sum())
        pos_w = float(wi[yi == 1].sum())
        value = pos_w / total_w
        leaf = [LEAF, 0.0, 0, 0, n_neg, n_pos, value]
        nodes.append(leaf)
        if depth >= hp.max_depth or len(idx) < hp.min_samples_split or n_pos == 0 or n_neg == 0:
            continue

        feats = rng.choice(n_features, size=k, replace=False)
        sub = X[np.ix_(idx, feats)]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        varying = hi > lo
        if not varying.any():
            continue
        # one threshold draw per non-constant candidate, in candidate order
        thresholds = np.full(k, np.nan)
        thresholds[varying] = rng.uniform(lo[varying], hi[varying])
        go_left = sub <= thresholds
        left_n = go_left.sum(axis=0)
        right_n = len(idx) - left_n
        left_w = wi @ go_left
        left_pos = (wi * yi) @ go_left
        score = _gini_children(left_w, left_pos, total_w, pos_w)
        ok = varying & (left_n >= hp.min_samples_leaf) & (right_n >= hp.min_samples_leaf)
        if not ok.any():
            continue
        score = np.where(ok, score, np.inf)
        best = int(np.argmin(score))  # first index wins ties
        mask = go_left[:, best]
        leaf[0] = int(feats[best])
        leaf[1] = float(thresholds[best])
        # push right first so the left child gets the next node id
        stack.append((idx[~mask], depth + 1, node_id, False))
        stack.append((idx[mask], depth + 1, node_id, True))
    return Tree.from_nodes([tuple(n) for n in nodes])


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def train(X, y, seed: int = 0, hyperparameters: Hyperparameters | None = None) -> ExtraTreesModel:
    """Fit an ExtraTrees ensemble on feature rows ``X`` and 0/1 labels ``y``.

    ``X`` may be an ``(n, 39)`` array or a sequence of ``FeatureVector``.
    """
    hp = hyperparameters or Hyperparameters()
    if len(X) and hasattr(X[0], "values") and not isinstance(X, np.ndarray):
        X = np.stack([fv.values for fv in X])
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValidationError(f"X has shape {X.shape} but there are {len(y)} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("labels must be 0 or 1")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training features must be finite")
    if len(y) < hp.min_samples_split:
        raise TooFewSamplesError(f"need at least {hp.min_samples_split} samples, got {len(y)}")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise SingleClassError("training data contains a single class")
    if hp.class_weight == "balanced":
        counts = np.array([len(y) - n_pos, n_pos], dtype=np.float64)
        w = (len(y) / (2.0 * counts))[y]
    else:
        w = np.ones(len(y))
    trees = [_grow_tree(X, y, w, hp, tree_rng(seed, t)) for t in range(hp.n_estimators)]
    names = FEATURE_NAMES if X.shape[1] == N_FEATURES else tuple(f"f{i}" for i in range(X.shape[1]))
    return ExtraTreesModel(trees, hp, int(seed), names)
