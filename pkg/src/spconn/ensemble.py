"""Prediction fusion, evaluation metrics, cross-validation and bootstrap
model comparison.

Classification ensembles fuse by majority vote over the members' binary
calls; vote ties fall back to the mean probability, and an exact 0.5 mean
resolves to the positive class. Regression ensembles average. AUC uses the
rank statistic (probability that a random positive outranks a random
negative, ties counted one half), which matches pair enumeration exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .validation import check_binary_labels, check_probabilities, check_task


@dataclass(frozen=True)
class EvalReport:
    """Task-dependent metric bundle for one set of predictions."""

    task: str
    n: int
    accuracy: float | None = None
    auc: float | None = None
    roc: tuple | None = None
    rmse: float | None = None
    mae: float | None = None

    def __post_init__(self):
        for name in ("accuracy", "auc"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.rmse is not None and self.rmse < 0:
            raise ValueError("rmse must be non-negative")

    def summary(self) -> str:
        if self.task == "classification":
            auc = "n/a" if self.auc is None else f"{self.auc:.4f}"
            return f"n={self.n} accuracy={self.accuracy:.4f} auc={auc}"
        return f"n={self.n} rmse={self.rmse:.4f} mae={self.mae:.4f}"


def _member_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("expected a (members, subjects) prediction array")
    return arr


def fuse_classification(member_probs) -> np.ndarray:
    """Majority vote over per-member probabilities; returns +-1 classes.

    Each member votes positive iff its probability exceeds 0.5. A vote tie
    falls back to comparing the mean probability with 0.5; a mean of
    exactly 0.5 resolves to the positive class.
    """
    probs = check_probabilities(_member_matrix(member_probs))
    votes = probs > 0.5
    pos = votes.sum(axis=0)
    neg = probs.shape[0] - pos
    mean = probs.mean(axis=0)
    fused = np.where(pos > neg, 1, -1)
    tie = pos == neg
    fused[tie] = np.where(mean[tie] >= 0.5, 1, -1)
    return fused


def fuse_regression(member_preds) -> np.ndarray:
    """Arithmetic mean of the members' predictions."""
    preds = _member_matrix(member_preds)
    if not np.isfinite(preds).all():
        raise ValueError("regression predictions must be finite")
    return preds.mean(axis=0)


def auc_score(probs, truth) -> float:
    """Rank-statistic AUC with ties counted one half.

    Raises when only one class is present, where the statistic is undefined.
    """
    probs = np.asarray(probs, dtype=np.float64)
    truth = check_binary_labels(truth)
    if probs.shape != truth.shape:
        raise ValueError("probs and truth must align")
    n_pos = int((truth == 1).sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: predictions cover a single class")
    ranks = rankdata(probs, method="average")
    u = ranks[truth == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(probs, truth) -> tuple[np.ndarray, np.ndarray]:
    """ROC staircase points (fpr, tpr), one per distinct threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    truth = check_binary_labels(truth)
    order = np.argsort(-probs, kind="stable")
    sorted_probs = probs[order]
    pos = (truth[order] == 1).astype(np.float64)
    neg = 1.0 - pos
    tp = np.cumsum(pos)
    fp = np.cumsum(neg)
    distinct = np.flatnonzero(np.diff(sorted_probs, append=-np.inf))
    n_pos, n_neg = tp[-1], fp[-1]
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC undefined: predictions cover a single class")
    tpr = np.concatenate([[0.0], tp[distinct] / n_pos])
    fpr = np.concatenate([[0.0], fp[distinct] / n_neg])
    return fpr, tpr


def evaluate(predictions, truth, task: str, classes=None) -> EvalReport:
    """Metrics for one prediction set.

    Classification expects probabilities (AUC, ROC) plus optional fused
    +-1 ``classes`` for accuracy; without them, probability > 0.5 decides.
    Regression reports RMSE and MAE.
    """
    check_task(task)
    truth = np.asarray(truth)
    preds = np.asarray(predictions, dtype=np.float64)
    if preds.shape != truth.shape:
        raise ValueError("predictions and truth must align")
    if task == "classification":
        y = check_binary_labels(truth)
        probs = check_probabilities(preds)
        if classes is None:
            classes = np.where(probs > 0.5, 1, -1)
        else:
            classes = check_binary_labels(classes)
        accuracy = float(np.mean(classes == y))
        auc = auc_score(probs, y)
        fpr, tpr = roc_curve(probs, y)
        return EvalReport(task=task, n=y.size, accuracy=accuracy, auc=auc,
                          roc=(tuple(fpr), tuple(tpr)))
    if not np.isfinite(preds).all():
        raise ValueError("regression predictions must be finite")
    err = preds - truth.astype(np.float64)
    return EvalReport(task=task, n=truth.size,
                      rmse=float(np.sqrt(np.mean(err ** 2))),
                      mae=float(np.mean(np.abs(err))))


def kfold_indices(y, k: int, seed: int = 0,
                  stratify: bool = False) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic k-fold partition; folds are disjoint, cover the data,
    and differ in size by at most one (per class when stratified)."""
    y = np.asarray(y)
    n = y.size
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}], got {k}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=int)
    if stratify:
        counter = 0
        for value in np.unique(y):
            idx = np.flatnonzero(y == value)
            idx = idx[rng.permutation(idx.size)]
            fold_of[idx] = (counter + np.arange(idx.size)) % k
            counter += idx.size
    else:
        perm = rng.permutation(n)
        fold_of[perm] = np.arange(n) % k
    folds = []
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, test))
    return folds


def kfold_cv(X, y, task: str, make_model, k: int = 10, seed: int = 0):
    """Cross-validate a model builder; returns (fold reports, pooled report).

    ``make_model`` returns a fresh estimator with fit/predict (and
    predict_proba for classification). Pooled metrics are computed over the
    concatenated held-out predictions.
    """
    check_task(task)
    X = np.asarray(X)
    y = np.asarray(y)
    stratify = task == "classification"
    folds = kfold_indices(y, k, seed, stratify=stratify)
    pooled = np.empty(y.size, dtype=np.float64)
    reports = []
    for train_idx, test_idx in folds:
        if stratify and np.unique(y[train_idx]).size < 2:
            raise ValueError("a class is absent from a training fold")
        model = make_model()
        model.fit(X[train_idx], y[train_idx])
        if task == "classification":
            preds = np.asarray(model.predict_proba(X[test_idx]), dtype=np.float64)
            classes = np.where(preds > 0.5, 1, -1)
            acc = float(np.mean(classes == y[test_idx]))
            try:
                auc = auc_score(preds, y[test_idx])
            except ValueError:
                auc = None  # single-class test fold (e.g. leave-one-out)
            reports.append(EvalReport(task=task, n=test_idx.size,
                                      accuracy=acc, auc=auc))
        else:
            preds = np.asarray(model.predict(X[test_idx]), dtype=np.float64)
            reports.append(evaluate(preds, y[test_idx], task))
        pooled[test_idx] = preds
    return reports, evaluate(pooled, y, task)


_METRICS = ("accuracy", "auc", "rmse", "mae")


def metric_value(metric: str, preds, truth) -> float:
    """Scalar metric; classification metrics take probabilities."""
    preds = np.asarray(preds, dtype=np.float64)
    truth = np.asarray(truth)
    if metric == "accuracy":
        y = check_binary_labels(truth)
        return float(np.mean(np.where(preds > 0.5, 1, -1) == y))
    if metric == "auc":
        return auc_score(preds, check_binary_labels(truth))
    err = preds - truth.astype(np.float64)
    if metric == "rmse":
        return float(np.sqrt(np.mean(err ** 2)))
    if metric == "mae":
        return float(np.mean(np.abs(err)))
    raise ValueError(f"metric must be one of {_METRICS}, got {metric!r}")


@dataclass(frozen=True)
class BootstrapResult:
    metric: str
    higher_better: bool
    diffs: np.ndarray
    metric_a: float
    metric_b: float

    @property
    def frac_a_underperforms(self) -> float:
        """Fraction of resamples where A does worse than B."""
        if self.higher_better:
            return float(np.mean(self.diffs < 0.0))
        return float(np.mean(self.diffs > 0.0))


def bootstrap_compare(preds_a, preds_b, truth, metric: str = "auc",
                      n_boot: int = 10000, seed: int = 0) -> BootstrapResult:
    """Paired bootstrap of metric(A) - metric(B) over subject resamples.

    Subjects are resampled with replacement; both prediction sets share
    each resample. AUC resamples that land on a single class are redrawn
    (the statistic is undefined there).
    """
    preds_a = np.asarray(preds_a, dtype=np.float64)
    preds_b = np.asarray(preds_b, dtype=np.float64)
    truth = np.asarray(truth)
    if preds_a.shape != truth.shape or preds_b.shape != truth.shape:
        raise ValueError("predictions and truth must align")
    if n_boot < 1:
        raise ValueError("n_boot must be positive")
    if metric == "auc":
        auc_score(preds_a, truth)  # fail early if truth is single-class
    rng = np.random.default_rng(seed)
    n = truth.size
    diffs = np.empty(n_boot, dtype=np.float64)
    for b in range(n_boot):
        for _ in range(1000):
            idx = rng.integers(0, n, size=n)
            if metric != "auc" or np.unique(np.asarray(truth)[idx]).size == 2:
                break
        else:
            raise RuntimeError("could not draw a two-class bootstrap sample")
        diffs[b] = metric_value(metric, preds_a[idx], truth[idx]) \
            - metric_value(metric, preds_b[idx], truth[idx])
    return BootstrapResult(
        metric=metric,
        higher_better=metric in ("accuracy", "auc"),
        diffs=diffs,
        metric_a=metric_value(metric, preds_a, truth),
        metric_b=metric_value(metric, preds_b, truth),
    )
