"""Training losses with analytic gradients."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

_EPS = 1e-12


def _check(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if not (np.isfinite(pred).all() and np.isfinite(target).all()):
        raise ValueError("loss inputs must be finite")
    return pred, target


def mse(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    pred, target = _check(pred, target)
    diff = pred - target
    value = float(np.mean(diff ** 2))
    return value, 2.0 * diff / pred.size


def bce(prob, target) -> tuple[float, np.ndarray]:
    """Binary cross-entropy on post-sigmoid probabilities.

    Targets must be 0/1 and probabilities in (0, 1). The value is evaluated
    through the logit so it agrees exactly with :func:`bce_with_logits`.
    """
    prob, target = _check(prob, target)
    if prob.min() <= 0.0 or prob.max() >= 1.0:
        raise ValueError("bce probabilities must lie strictly inside (0, 1)")
    if not np.isin(target, (0.0, 1.0)).all():
        raise ValueError("bce targets must be 0 or 1")
    logit = np.log(prob) - np.log1p(-prob)
    value, _ = bce_with_logits(logit, target)
    grad = (prob - target) / np.maximum(prob * (1.0 - prob), _EPS) / prob.size
    return value, grad


def bce_with_logits(logit, target) -> tuple[float, np.ndarray]:
    """Numerically stable binary cross-entropy evaluated at the logit."""
    logit, target = _check(logit, target)
    value = float(np.mean(
        np.maximum(logit, 0.0) - logit * target + np.log1p(np.exp(-np.abs(logit)))
    ))
    grad = (expit(logit) - target) / logit.size
    return value, grad


def loss(kind: str, pred, target) -> tuple[float, np.ndarray]:
    """Dispatch by name: 'mse' or 'bce' (probability inputs)."""
    if kind == "mse":
        return mse(pred, target)
    if kind == "bce":
        return bce(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")
