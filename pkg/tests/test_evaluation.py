import numpy as np
import pytest

from oodgate.errors import ClassTooSmallError, EmptyInputError, NoModelsError, SingleClassError
from oodgate.evaluation import (
    accuracy_at_threshold,
    auroc,
    consensus_predict,
    cross_validate,
    external_validation,
    reports_to_csv,
    stratified_kfold,
)
from oodgate.forest import ExtraTreesModel, Hyperparameters, Tree, train


def pairwise_auroc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def test_auroc_examples():
    assert auroc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auroc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
    with pytest.raises(SingleClassError):
        auroc([0.1, 0.2], [1, 1])


def test_auroc_matches_pairwise_with_ties(rng):
    for _ in range(100):
        n = int(rng.integers(2, 301))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 20, n) / 20.0
        assert abs(auroc(scores, labels) - pairwise_auroc(scores, labels)) < 1e-12


def test_auroc_rank_invariance(rng):
    s = rng.normal(size=80)
    y = rng.integers(0, 2, 80)
    assert auroc(s, y) == auroc(np.exp(3 * s) + 1, y)


def test_accuracy_rules():
    assert accuracy_at_threshold([0.7, 0.4], [1, 0]) == 1.0
    assert accuracy_at_threshold([0.5], [1]) == 1.0
    assert accuracy_at_threshold([0.9, 0.1], [0, 1]) == 0.0
    with pytest.raises(EmptyInputError):
        accuracy_at_threshold([], [])


def test_stratified_divisible_case():
    y = np.array([1] * 20 + [0] * 80)
    folds = stratified_kfold(y, 5, seed=0)
    assert [int(y[f].sum()) for f in folds] == [4] * 5
    assert [len(f) for f in folds] == [20] * 5


def test_stratified_remainder_case():
    y = np.array([1] * 21 + [0] * 80)
    pos = sorted(int(y[f].sum()) for f in stratified_kfold(y, 5, seed=1))
    assert pos == [4, 4, 4, 4, 5]


def test_stratified_partition_and_balance(rng):
    for seed in range(50):
        n = int(rng.integers(10, 200))
        y = rng.integers(0, 2, n)
        y[:5], y[5:10] = 0, 1
        folds = stratified_kfold(y, 5, seed)
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))
        for cls in (0, 1):
            counts = [int(np.sum(y[f] == cls)) for f in folds]
            assert max(counts) - min(counts) <= 1
        assert max(map(len, folds)) - min(map(len, folds)) <= 1


def test_stratified_class_too_small():
    with pytest.raises(ClassTooSmallError):
        stratified_kfold([1, 1, 0, 0, 0, 0, 0, 0], 5)


def _constant_model(p):
    return ExtraTreesModel([Tree.single_leaf(p)])


def test_consensus():
    x = np.zeros(39)
    assert consensus_predict([_constant_model(p) for p in (0.2, 0.4, 0.6, 0.8, 1.0)], x) == pytest.approx(0.6)
    m = _constant_model(0.3)
    assert consensus_predict([m] * 5, x) == consensus_predict([m], x)
    with pytest.raises(NoModelsError):
        consensus_predict([], x)


def test_cross_validate_scores_every_sample_once(rng):
    X = rng.normal(size=(120, 39))
    y = (X[:, 0] > 0).astype(int)
    hp = Hyperparameters(n_estimators=20)
    cv = cross_validate(X, y, seed=4, hyperparameters=hp)
    assert len(cv.report.folds) == 5 and len(cv.models) == 5
    assert np.all(np.isfinite(cv.report.scores)) and len(cv.report.scores) == 120
    assert np.array_equal(np.sort(np.concatenate(cv.folds)), np.arange(120))
    assert cv.report.auroc > 0.9
    ext = external_validation(cv.models, X[:30], y[:30])
    assert ext.kind == "external" and 0 <= ext.accuracy <= 1
    csv_text = reports_to_csv([cv.report, ext])
    assert len(csv_text.splitlines()) == 1 + 6 + 1
    assert "auroc:" in cv.report.to_text()


def test_cross_validate_is_deterministic(rng):
    X = rng.normal(size=(60, 39))
    y = (X[:, 1] > 0).astype(int)
    hp = Hyperparameters(n_estimators=5)
    a = cross_validate(X, y, seed=1, hyperparameters=hp)
    b = cross_validate(X, y, seed=1, hyperparameters=hp)
    assert a.report.scores.tobytes() == b.report.scores.tobytes()


def test_training_cost_sanity(rng):
    X = rng.normal(size=(50, 39))
    y = (X[:, 0] > 0).astype(int)
    assert len(train(X, y, hyperparameters=Hyperparameters(n_estimators=3)).trees) == 3
