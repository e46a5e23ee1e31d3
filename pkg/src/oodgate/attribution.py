"""Shapley attributions for the tree ensemble.

``tree_shap`` is the exact path-dependent TreeSHAP recursion: a feature that
is absent from a coalition is marginalized by following both children of each
split on it, weighted by the children's training cover. ``brute_force_shapley``
computes the same quantity by enumerating coalitions and exists as an
independent check.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from oodgate.errors import EmptySampleError, SchemaMismatchError, TooManyFeaturesError
from oodgate.forest import ExtraTreesModel, Tree

MAX_BRUTE_FORCE_FEATURES = 12


@dataclass(frozen=True)
class AttributionResult:
    base_value: float
    contributions: np.ndarray
    prediction: float
    feature_names: tuple[str, ...]

    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + math.fsum(self.contributions.tolist()) - self.prediction)


# ---------------------------------------------------------------------------
# path bookkeeping for the recursion: each element is
# [feature, zero_fraction, one_fraction, weight]


def _extend(path: list[list], zero: float, one: float, feature: int) -> None:
    depth = len(path)
    path.append([feature, zero, one, 1.0 if depth == 0 else 0.0])
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += one * path[i][3] * (i + 1) / (depth + 1)
        path[i][3] = zero * path[i][3] * (depth - i) / (depth + 1)


def _unwind(path: list[list], index: int) -> None:
    depth = len(path) - 1
    one = path[index][2]
    zero = path[index][1]
    next_one = path[depth][3]
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = path[i][3]
            path[i][3] = next_one * (depth + 1) / ((i + 1) * one)
            next_one = tmp - path[i][3] * zero * (depth - i) / (depth + 1)
        else:
            path[i][3] = path[i][3] * (depth + 1) / (zero * (depth - i))
    for i in range(index, depth):
        path[i][0], path[i][1], path[i][2] = path[i + 1][0], path[i + 1][1], path[i + 1][2]
    path.pop()


def _unwound_sum(path: list[list], index: int) -> float:
    depth = len(path) - 1
    one = path[index][2]
    zero = path[index][1]
    next_one = path[depth][3]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = next_one * (depth + 1) / ((i + 1) * one)
            total += tmp
            next_one = path[i][3] - tmp * zero * (depth - i) / (depth + 1)
        else:
            total += path[i][3] / zero / ((depth - i) / (depth + 1))
    return total


def tree_shap_single(tree: Tree, x, n_features: int) -> np.ndarray:
    """Exact path-dependent Shapley values of one tree at ``x``."""
    phi = np.zeros(n_features)
    feature, threshold, left, right, value = tree.feature, tree.threshold, tree.left, tree.right, tree.value
    cover = tree.counts.sum(axis=1).astype(np.float64)

    def recurse(node: int, parent_path: list[list], zero: float, one: float, split_feature: int) -> None:
        path = [e[:] for e in parent_path]
        _extend(path, zero, one, split_feature)
        f = feature[node]
        if f < 0:
            v = value[node]
            for i in range(1, len(path)):
                w = _unwound_sum(path, i)
                phi[path[i][0]] += w * (path[i][2] - path[i][1]) * v
            return
        if x[f] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        incoming_zero = incoming_one = 1.0
        for k in range(1, len(path)):
            if path[k][0] == f:
                incoming_zero, incoming_one = path[k][1], path[k][2]
                _unwind(path, k)
                break
        recurse(hot, path, cover[hot] / cover[node] * incoming_zero, incoming_one, f)
        recurse(cold, path, cover[cold] / cover[node] * incoming_zero, 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)
    return phi


def expected_value(tree: Tree) -> float:
    """Cover-weighted mean of the leaf values."""
    leaves = tree.feature < 0
    cover = tree.counts.sum(axis=1).astype(np.float64)
    return float(np.sum(cover[leaves] * tree.value[leaves]) / cover[0])


def _check_input(model: ExtraTreesModel, x) -> np.ndarray:
    v = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != model.n_features:
        raise SchemaMismatchError(f"expected {model.n_features} features, got shape {v.shape}")
    return v


def tree_shap(model: ExtraTreesModel, x) -> AttributionResult:
    """Ensemble attribution: per-tree Shapley values and expectations averaged."""
    v = _check_input(model, x)
    phi = np.zeros(model.n_features)
    base = 0.0
    for tree in model.trees:
        phi += tree_shap_single(tree, v, model.n_features)
        base += expected_value(tree)
    n = len(model.trees)
    prediction = float(np.mean([t.predict_one(v) for t in model.trees]))
    return AttributionResult(base / n, phi / n, prediction, tuple(model.feature_names))


def _coalition_value(tree: Tree, x, present: frozenset) -> float:
    cover = tree.counts.sum(axis=1).astype(np.float64)

    def walk(node: int) -> float:
        f = tree.feature[node]
        if f < 0:
            return float(tree.value[node])
        lo, hi = tree.left[node], tree.right[node]
        if f in present:
            return walk(lo if x[f] <= tree.threshold[node] else hi)
        return (cover[lo] * walk(lo) + cover[hi] * walk(hi)) / cover[node]

    return walk(0)


def brute_force_shapley(tree: Tree, x, features) -> dict[int, float]:
    """Shapley values by enumerating every coalition of ``features``.

    ``features`` must include every feature the tree splits on; the result maps
    each listed feature index to its contribution.
    """
    features = list(features)
    m = len(features)
    if m > MAX_BRUTE_FORCE_FEATURES:
        raise TooManyFeaturesError(f"brute force limited to {MAX_BRUTE_FORCE_FEATURES} features, got {m}")
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    cache: dict[frozenset, float] = {}

    def val(s: frozenset) -> float:
        if s not in cache:
            cache[s] = _coalition_value(tree, x, s)
        return cache[s]

    out = {}
    for i in features:
        others = [f for f in features if f != i]
        total = 0.0
        for size in range(m):
            weight = math.factorial(size) * math.factorial(m - size - 1) / math.factorial(m)
            for subset in itertools.combinations(others, size):
                s = frozenset(subset)
                total += weight * (val(s | {i}) - val(s))
        out[i] = total
    return out


def rank_global_importance(model: ExtraTreesModel, sample) -> list[tuple[str, float]]:
    """Features ordered by mean |contribution| over ``sample`` (schema order on ties)."""
    sample = list(sample)
    if not sample:
        raise EmptySampleError("importance ranking needs at least one input")
    total = np.zeros(model.n_features)
    for x in sample:
        total += np.abs(tree_shap(model, x).contributions)
    mean = total / len(sample)
    order = sorted(range(model.n_features), key=lambda i: (-mean[i], i))
    return [(model.feature_names[i], float(mean[i])) for i in order]


def attribution_csv(result: AttributionResult) -> str:
    buf = io.StringIO()
    buf.write(f"# base_value={result.base_value!r}\n")
    buf.write(f"# prediction={result.prediction!r}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "contribution"])
    for name, c in zip(result.feature_names, result.contributions.tolist()):
        writer.writerow([name, repr(c)])
    return buf.getvalue()


def ranking_csv(ranking: list[tuple[str, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "mean_abs_contribution"])
    for name, v in ranking:
        writer.writerow([name, repr(v)])
    return buf.getvalue()
