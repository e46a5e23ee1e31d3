"""Stratified cross-validation, external consensus validation and metrics."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from oodgate.errors import ClassTooSmallError, EmptyInputError, NoModelsError, SingleClassError, ValidationError
from oodgate.forest import ExtraTreesModel, Hyperparameters, train
from oodgate.manifest import FeatureCache

log = logging.getLogger(__name__)

THRESHOLD = 0.5
N_FOLDS = 5


def stratified_kfold(labels, k: int = N_FOLDS, seed: int = 0) -> list[np.ndarray]:
    """Split indices into ``k`` disjoint folds preserving class proportions.

    Each class is shuffled and dealt round-robin; the deal continues from the
    fold where the previous class stopped so fold sizes also stay balanced.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise ClassTooSmallError(f"class {cls} has {len(members)} members, fewer than k={k}")
        members = rng.permutation(members)
        for pos, idx in enumerate(members):
            buckets[(start + pos) % k].append(int(idx))
        start = (start + len(members)) % k
    return [np.array(sorted(b), dtype=np.int64) for b in buckets]


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and of equal length")
    return scores, labels


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC via midrank sums; tied pairs count one half."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUROC needs both classes")
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy_at_threshold(scores, labels, threshold: float = THRESHOLD) -> float:
    """Fraction correct when predicting fundus for ``score >= threshold``."""
    scores, labels = _check_binary(scores, labels)
    if scores.size == 0:
        raise EmptyInputError("accuracy of an empty set is undefined")
    return float(np.mean((scores >= threshold).astype(np.int64) == labels))


def consensus_predict(models, x) -> float:
    """Mean P(fundus) over the given models."""
    models = list(models)
    if not models:
        raise NoModelsError("consensus needs at least one model")
    return float(np.mean(consensus_scores(models, np.asarray(getattr(x, "values", x))[None, :])))


def consensus_scores(models, X) -> np.ndarray:
    models = list(models)
    if not models:
        raise NoModelsError("consensus needs at least one model")
    return np.mean([m.predict_proba(X) for m in models], axis=0)


@dataclass
class FoldMetrics:
    fold: int
    auroc: float
    accuracy: float
    n_pos: int
    n_neg: int


@dataclass
class EvalReport:
    kind: str  # "internal" or "external"
    auroc: float
    accuracy: float
    n_pos: int
    n_neg: int
    threshold: float = THRESHOLD
    factor: int = 1
    folds: list[FoldMetrics] = field(default_factory=list)
    scores: np.ndarray | None = field(default=None, repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)

    def to_text(self) -> str:
        lines = [
            f"kind: {self.kind}",
            f"factor: {self.factor}",
            f"threshold: {self.threshold}",
            f"n_pos: {self.n_pos}",
            f"n_neg: {self.n_neg}",
            f"auroc: {self.auroc:.6f}",
            f"accuracy: {self.accuracy:.6f}",
        ]
        for f in self.folds:
            lines.append(f"fold_{f.fold}: auroc={f.auroc:.6f} accuracy={f.accuracy:.6f} n_pos={f.n_pos} n_neg={f.n_neg}")
        return "\n".join(lines) + "\n"


REPORT_COLUMNS = ["kind", "factor", "fold", "auroc", "accuracy", "threshold", "n_pos", "n_neg"]


def reports_to_csv(reports) -> str:
    """One row per pooled/consensus report plus one row per fold (``fold`` blank for pooled)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in reports:
        writer.writerow([r.kind, r.factor, "", repr(r.auroc), repr(r.accuracy), r.threshold, r.n_pos, r.n_neg])
        for f in r.folds:
            writer.writerow([r.kind, r.factor, f.fold, repr(f.auroc), repr(f.accuracy), r.threshold, f.n_pos, f.n_neg])
    return buf.getvalue()


@dataclass
class InternalValidation:
    report: EvalReport
    models: list[ExtraTreesModel]
    folds: list[np.ndarray]


def cross_validate(
    X,
    y,
    seed: int = 0,
    factor: int = 1,
    hyperparameters: Hyperparameters | None = None,
    k: int = N_FOLDS,
) -> InternalValidation:
    """Train on k-1 folds, score the held-out fold, pool all held-out scores."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    folds = stratified_kfold(y, k, seed)
    pooled = np.full(len(y), np.nan)
    models = []
    fold_metrics = []
    for i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx, assume_unique=True)
        model = train(X[train_idx], y[train_idx], seed=seed * 1000 + i, hyperparameters=hyperparameters)
        s = model.predict_proba(X[test_idx])
        pooled[test_idx] = s
        models.append(model)
        yt = y[test_idx]
        fold_metrics.append(FoldMetrics(i, auroc(s, yt), accuracy_at_threshold(s, yt), int(yt.sum()), int(len(yt) - yt.sum())))
        log.info("fold %d: auroc=%.4f acc=%.4f", i, fold_metrics[-1].auroc, fold_metrics[-1].accuracy)
    report = EvalReport(
        kind="internal",
        auroc=auroc(pooled, y),
        accuracy=accuracy_at_threshold(pooled, y),
        n_pos=int(y.sum()),
        n_neg=int(len(y) - y.sum()),
        factor=factor,
        folds=fold_metrics,
        scores=pooled,
        labels=y,
    )
    return InternalValidation(report, models, folds)


def external_validation(models, X, y, factor: int = 1) -> EvalReport:
    """Score held-out data with the mean probability of the fold models."""
    y = np.asarray(y).astype(np.int64)
    s = consensus_scores(models, np.asarray(X, dtype=np.float64))
    n_pos = int(y.sum())
    return EvalReport(
        "external", auroc(s, y), accuracy_at_threshold(s, y), n_pos, len(y) - n_pos, factor=factor, scores=s, labels=y
    )


def run_internal_validation(manifest, factor: int = 1, seed: int = 0, extractor=None, hyperparameters=None) -> InternalValidation:
    """Extract features for the internal split and cross-validate."""
    extractor = extractor or FeatureCache()
    entries = manifest.split("internal")
    if not entries:
        raise EmptyInputError("manifest has no internal entries")
    X = extractor.matrix([e.path for e in entries], factor)
    y = np.array([e.label for e in entries])
    return cross_validate(X, y, seed=seed, factor=factor, hyperparameters=hyperparameters)


def run_external_validation(manifest, models, factor: int = 1, extractor=None) -> EvalReport:
    extractor = extractor or FeatureCache()
    entries = manifest.split("external")
    if not entries:
        raise EmptyInputError("manifest has no external entries")
    X = extractor.matrix([e.path for e in entries], factor)
    y = np.array([e.label for e in entries])
    return external_validation(models, X, y, factor)
