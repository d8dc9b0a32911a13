"""Small input-validation helpers shared across estimators and pipeline ops."""

from __future__ import annotations

import numpy as np

TASKS = ("classification", "regression")


def check_task(task: str) -> str:
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    return task


def as_feature_matrix(X, dtype=np.float64) -> np.ndarray:
    """Coerce X to a finite 2D (n_samples, n_features) array."""
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected 2D feature matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    return X


def as_target_vector(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if n is not None and y.size != n:
        raise ValueError(f"expected {n} targets, got {y.size}")
    if not np.isfinite(y).all():
        raise ValueError("targets contain non-finite values")
    return y


def check_binary_labels(y) -> np.ndarray:
    """Validate +-1 class labels and return them as an int array."""
    y = np.asarray(y).ravel()
    vals = set(np.unique(y).tolist())
    if not vals <= {-1, 1}:
        raise ValueError(f"class labels must be -1/+1, got {sorted(vals)}")
    return y.astype(int)


def check_probabilities(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if not np.isfinite(p).all():
        raise ValueError("probabilities contain non-finite values")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return p


def check_same_length(name_a: str, a, name_b: str, b) -> None:
    if len(a) != len(b):
        raise ValueError(f"{name_a} has length {len(a)} but {name_b} has {len(b)}")


def check_grids_match(name_a: str, meta_a, name_b: str, meta_b) -> None:
    if meta_a != meta_b:
        raise ValueError(f"grid mismatch between {name_a} and {name_b}")
