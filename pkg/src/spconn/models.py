"""The four predictor families: ridge, FCN, 3D CNN and BrainNet.

Network models are sklearn-style estimators around the layer substrate in
:mod:`spconn.nn`; ridge has a closed-form solver. Family defaults follow
the reference training recipes (optimizer, learning rate, batch size 64,
early stopping on validation loss, weight averaging for the regression
CNN); every knob stays overridable through the estimator constructor.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lstsq
from scipy.special import expit
from sklearn.base import BaseEstimator

from . import nn
from .nn.losses import bce_with_logits, mse
from .nn.network import Network, load_network, save_network
from .nn.optim import SwaAverager, make_optimizer
from .validation import (
    as_feature_matrix,
    as_target_vector,
    check_binary_labels,
    check_task,
)

FAMILIES = ("ridge", "fcn", "cnn3d", "brainnet")

# Feature representation each family consumes.
FEATURE_KIND = {
    "ridge": "vector",
    "fcn": "vector",
    "brainnet": "matrix",
    "cnn3d": "fingerprint",
}

# (family, task) -> training defaults.
TRAIN_DEFAULTS = {
    ("cnn3d", "classification"): {"optimizer": "sgd_momentum", "lr": 0.001},
    ("cnn3d", "regression"): {"optimizer": "adam", "lr": 0.0005},
    ("fcn", "classification"): {"optimizer": "sgd_momentum", "lr": 0.01},
    ("fcn", "regression"): {"optimizer": "sgd_momentum", "lr": 0.001},
    ("brainnet", "classification"): {"optimizer": "sgd_momentum", "lr": 0.008,
                                     "max_steps": 1000},
    ("brainnet", "regression"): {"optimizer": "sgd_momentum", "lr": 0.0005,
                                 "max_steps": 1000},
}

ALPHA_GRID = np.linspace(0.1, 10.0, 10)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


def ridge_fit(X, y, alpha: float, fit_intercept: bool = True):
    """Closed-form ridge solution of ||Xw - y||^2 + alpha ||w||^2.

    Data is centered when fitting an intercept; the system is solved on the
    smaller Gram side through a Cholesky factorization (least squares when
    alpha is 0). Returns (weights, intercept).
    """
    X = as_feature_matrix(X)
    y = as_target_vector(y, X.shape[0])
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    n, p = X.shape
    if fit_intercept:
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        Xc = X - x_mean
        yc = y - y_mean
    else:
        x_mean = np.zeros(p)
        y_mean = 0.0
        Xc, yc = X, y
    if alpha == 0.0:
        w = lstsq(Xc, yc)[0]
    elif p <= n:
        gram = Xc.T @ Xc + alpha * np.eye(p)
        w = cho_solve(cho_factor(gram, lower=True), Xc.T @ yc)
    else:
        gram = Xc @ Xc.T + alpha * np.eye(n)
        beta = cho_solve(cho_factor(gram, lower=True), yc)
        w = Xc.T @ beta
    b = y_mean - float(x_mean @ w)
    return w, b


class RidgeRegression(BaseEstimator):
    """Linear least squares with an L2 weight penalty."""

    def __init__(self, alpha: float = 1.0, fit_intercept: bool = True):
        self.alpha = alpha
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        self.coef_, self.intercept_ = ridge_fit(X, y, self.alpha,
                                                self.fit_intercept)
        return self

    def decision_function(self, X):
        X = as_feature_matrix(X)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return self.decision_function(X)


class RidgeClassifier(BaseEstimator):
    """Ridge on +-1 encoded labels; the class is the sign of the score."""

    def __init__(self, alpha: float = 1.0, fit_intercept: bool = True):
        self.alpha = alpha
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        y = check_binary_labels(y)
        if len(set(y.tolist())) < 2:
            raise ValueError("classification training data needs both classes")
        self.coef_, self.intercept_ = ridge_fit(X, y, self.alpha,
                                                self.fit_intercept)
        return self

    def decision_function(self, X):
        X = as_feature_matrix(X)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0.0, 1, -1)

    def predict_proba(self, X):
        # Monotone squash of the score so ridge members can join probability
        # fusion and ranking metrics; ranks (hence AUC) are unchanged.
        return expit(self.decision_function(X))


def ridge_alpha_search(X, y, task: str, folds, grid=None) -> float:
    """Pick the regularization weight by cross-validation.

    ``folds`` is a sequence of (train_idx, test_idx) pairs. Classification
    maximizes accuracy, regression minimizes RMSE; ties keep the smallest
    alpha of the default 10-point linear grid on [0.1, 10].
    """
    check_task(task)
    grid = ALPHA_GRID if grid is None else np.sort(np.asarray(grid, dtype=float))
    X = as_feature_matrix(X)
    y = np.asarray(y)
    scores = []
    for alpha in grid:
        fold_scores = []
        for train_idx, test_idx in folds:
            if task == "classification":
                if len(np.unique(y[train_idx])) < 2:
                    raise ValueError("degenerate fold: single-class training split")
                model = RidgeClassifier(alpha=alpha).fit(X[train_idx], y[train_idx])
                fold_scores.append(np.mean(model.predict(X[test_idx]) == y[test_idx]))
            else:
                model = RidgeRegression(alpha=alpha).fit(X[train_idx], y[train_idx])
                err = model.predict(X[test_idx]) - y[test_idx]
                fold_scores.append(-np.sqrt(np.mean(err ** 2)))
        scores.append(np.mean(fold_scores))
    return float(grid[int(np.argmax(scores))])


def _head(task: str) -> dict:
    return {"kind": "activation",
            "name": "sigmoid" if task == "classification" else "linear"}


def fcn_specs(num_regions: int, task: str) -> list[dict]:
    """Four ELU hidden layers (800/500/100/20) with dropout, then the head."""
    check_task(task)
    if num_regions < 2:
        raise ValueError("need at least 2 regions")
    width = num_regions * (num_regions - 1) // 2
    specs: list[dict] = []
    prev = width
    for units in (800, 500, 100, 20):
        specs.append({"kind": "dense", "in_features": prev, "out_features": units})
        specs.append({"kind": "activation", "name": "elu"})
        specs.append({"kind": "dropout", "rate": 0.2})
        prev = units
    specs.append({"kind": "dense", "in_features": prev, "out_features": 1})
    specs.append(_head(task))
    return specs


def _pooled(extent: int) -> int:
    return (extent - 2) // 2 + 1


def cnn3d_specs(grid_dims, num_regions: int, task: str) -> list[dict]:
    """Three conv/pool stages (16/32/64 filters) and a 128-unit dense head.

    The regression variant adds batch normalization after the first and
    second pooling stages. Spatial dims must survive three 2x poolings.
    """
    check_task(task)
    dims = tuple(int(d) for d in grid_dims)
    if len(dims) != 3:
        raise ValueError("grid_dims must have three extents")
    if min(dims) < 8:
        raise ValueError(
            f"spatial dims {dims} too small for three 2x poolings (need >= 8)"
        )
    specs: list[dict] = []
    channels = num_regions
    for i, filters in enumerate((16, 32, 64)):
        specs.append({"kind": "conv3d", "in_channels": channels,
                      "out_channels": filters, "kernel": 3, "padding": "same"})
        specs.append({"kind": "activation", "name": "relu"})
        specs.append({"kind": "maxpool3d", "window": 2, "stride": 2})
        if task == "regression" and i < 2:
            specs.append({"kind": "batchnorm", "num_channels": filters,
                          "eps": 1e-5, "momentum": 0.1})
        channels = filters
        dims = tuple(_pooled(d) for d in dims)
    flat = channels * int(np.prod(dims))
    specs.append({"kind": "flatten"})
    specs.append({"kind": "dense", "in_features": flat, "out_features": 128})
    specs.append({"kind": "activation", "name": "relu"})
    specs.append({"kind": "dropout", "rate": 0.2})
    specs.append({"kind": "dense", "in_features": 128, "out_features": 1})
    specs.append(_head(task))
    return specs


def brainnet_specs(num_regions: int, task: str) -> list[dict]:
    """Edge-to-node (256 filters), node-to-graph (128), single dense output."""
    check_task(task)
    if num_regions < 2:
        raise ValueError("need at least 2 regions")
    return [
        {"kind": "edge_to_node", "in_channels": 1, "size": num_regions,
         "filters": 256},
        {"kind": "activation", "name": "leaky_relu", "alpha": 0.33},
        {"kind": "dropout", "rate": 0.2},
        {"kind": "node_to_graph", "in_filters": 256, "size": num_regions,
         "out_features": 128},
        {"kind": "activation", "name": "leaky_relu", "alpha": 0.33},
        {"kind": "dense", "in_features": 128, "out_features": 1},
        _head(task),
    ]


def build_specs(family: str, task: str, num_regions: int,
                grid_dims=None) -> list[dict]:
    if family == "fcn":
        return fcn_specs(num_regions, task)
    if family == "brainnet":
        return brainnet_specs(num_regions, task)
    if family == "cnn3d":
        if grid_dims is None:
            raise ValueError("cnn3d needs grid_dims")
        return cnn3d_specs(grid_dims, num_regions, task)
    raise ValueError(f"no network architecture for family {family!r}")


def _regions_from_pair_count(width: int) -> int:
    r = int(round((1 + np.sqrt(1 + 8 * width)) / 2))
    if r * (r - 1) // 2 != width:
        raise ValueError(f"{width} is not R(R-1)/2 for any region count R")
    return r


class ConnectomeNet(BaseEstimator):
    """Trainable network estimator for the fcn, cnn3d and brainnet families.

    ``fit`` expects features in the family's representation: (n, p) pair
    vectors for fcn, (n, R, R) matrices for brainnet, (n, R, nx, ny, nz)
    fingerprints for cnn3d. Classification targets are +-1; fit maps them
    to {0, 1} for the cross-entropy loss and ``predict`` maps back.

    Hyperparameters left at None fall back to the family/task defaults in
    ``TRAIN_DEFAULTS``. Training is deterministic in (data, parameters).
    """

    def __init__(self, family: str = "fcn", task: str = "classification",
                 optimizer: str | None = None, lr: float | None = None,
                 momentum: float = 0.9, batch_size: int = 64,
                 max_epochs: int = 150, patience: int = 10,
                 max_steps: int | None = None, val_fraction: float = 0.1,
                 swa_window: int = 20, dtype: str = "float32",
                 layer_specs: list | None = None,
                 parcellation_id: str = "", seed: int = 0):
        self.family = family
        self.task = task
        self.optimizer = optimizer
        self.lr = lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.max_steps = max_steps
        self.val_fraction = val_fraction
        self.swa_window = swa_window
        self.dtype = dtype
        self.layer_specs = layer_specs
        self.parcellation_id = parcellation_id
        self.seed = seed

    # -- configuration ----------------------------------------------------
    def _resolved(self) -> dict:
        if self.family not in ("fcn", "cnn3d", "brainnet"):
            raise ValueError(f"unknown network family {self.family!r}")
        check_task(self.task)
        cfg = dict(TRAIN_DEFAULTS[(self.family, self.task)])
        if self.optimizer is not None:
            cfg["optimizer"] = self.optimizer
        if self.lr is not None:
            cfg["lr"] = self.lr
        if self.max_steps is not None:
            cfg["max_steps"] = self.max_steps
        cfg.setdefault("max_steps", None)
        cfg["momentum"] = self.momentum
        if cfg["lr"] <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        cfg["use_swa"] = self.family == "cnn3d" and self.task == "regression" \
            and self.swa_window > 0
        return cfg

    def _prepare_inputs(self, X) -> np.ndarray:
        X = np.asarray(X)
        if self.family == "fcn":
            if X.ndim != 2:
                raise ValueError(f"fcn expects (n, pairs) features, got {X.shape}")
        elif self.family == "brainnet":
            if X.ndim == 3 and X.shape[1] == X.shape[2]:
                X = X[:, None, :, :]
            if X.ndim != 4 or X.shape[1] != 1 or X.shape[2] != X.shape[3]:
                raise ValueError(
                    f"brainnet expects (n, R, R) matrices, got {X.shape}")
        elif self.family == "cnn3d":
            if X.ndim != 5:
                raise ValueError(
                    f"cnn3d expects (n, R, nx, ny, nz) fingerprints, got {X.shape}")
        if not np.isfinite(X).all():
            raise ValueError("features contain non-finite values")
        return X

    def _specs_for(self, X) -> list[dict]:
        if self.layer_specs is not None:
            return list(self.layer_specs)
        if self.family == "fcn":
            return fcn_specs(_regions_from_pair_count(X.shape[1]), self.task)
        if self.family == "brainnet":
            return brainnet_specs(X.shape[2], self.task)
        return cnn3d_specs(X.shape[2:], X.shape[1], self.task)

    # -- training ----------------------------------------------------------
    def fit(self, X, y):
        cfg = self._resolved()
        X = self._prepare_inputs(X)
        n = X.shape[0]
        if self.task == "classification":
            y = check_binary_labels(y)
            targets = (y + 1) / 2.0
        else:
            targets = as_target_vector(y, n)
        if targets.shape[0] != n:
            raise ValueError("feature/target length mismatch")

        rng = np.random.default_rng(self.seed)
        net = Network([nn.layer_from_spec(s) for s in self._specs_for(X)],
                      dtype=np.dtype(self.dtype))
        net.initialize(rng)
        if self.task == "classification":
            last = net.layers[-1]
            if getattr(last, "name", None) != "sigmoid":
                raise ValueError("classification network must end in a sigmoid")

        n_val = int(round(self.val_fraction * n))
        perm = rng.permutation(n)
        val_idx = perm[:n_val]
        train_idx = perm[n_val:]
        if train_idx.size == 0:
            raise ValueError("empty training split")

        optimizer = make_optimizer(cfg["optimizer"], cfg["lr"], cfg["momentum"])
        has_bn = any(layer.kind == "batchnorm" for layer in net.layers)
        swa_tail = deque(maxlen=self.swa_window) if cfg["use_swa"] else None
        history = []
        best_val = np.inf
        best_params = None
        since_best = 0
        steps = 0
        stop = False
        for epoch in range(self.max_epochs):
            order = train_idx[rng.permutation(train_idx.size)]
            total = 0.0
            seen = 0
            for start in range(0, order.size, self.batch_size):
                batch = order[start:start + self.batch_size]
                if has_bn and batch.size == 1:
                    continue  # batchnorm cannot normalize a single sample
                value = self._train_step(net, optimizer, X[batch],
                                         targets[batch], rng, epoch)
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite training loss at epoch {epoch}")
                total += value * batch.size
                seen += batch.size
                steps += 1
                if cfg["max_steps"] is not None and steps >= cfg["max_steps"]:
                    stop = True
                    break
            train_loss = total / max(seen, 1)
            val_loss = self._eval_loss(net, X[val_idx], targets[val_idx]) \
                if val_idx.size else np.nan
            history.append({"epoch": epoch, "train_loss": train_loss,
                            "val_loss": val_loss})
            if swa_tail is not None:
                swa_tail.append(net.snapshot())
            if val_idx.size and np.isfinite(val_loss):
                if val_loss < best_val:
                    best_val = val_loss
                    best_params = net.snapshot()
                    since_best = 0
                else:
                    since_best += 1
                    if since_best >= self.patience:
                        stop = True
            if stop:
                break
        if swa_tail is not None:
            averager = SwaAverager()
            for snap in swa_tail:
                averager.update(snap)
            net.load_parameters([a.astype(net.dtype) for a in averager.finalize()])
        elif best_params is not None:
            net.load_parameters(best_params)
        self.net_ = net
        self.history_ = history
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        self.input_shape_ = X.shape[1:]
        return self

    def _train_step(self, net, optimizer, xb, tb, rng, epoch) -> float:
        if self.task == "classification":
            depth = len(net.layers) - 1  # pair the sigmoid with the bce loss
            out = net.forward(xb, train=True, rng=rng, num_layers=depth)
        else:
            depth = None
            out = net.forward(xb, train=True, rng=rng)
        if not np.isfinite(out).all():
            raise TrainingDiverged(f"non-finite network output at epoch {epoch}")
        if self.task == "classification":
            value, grad = bce_with_logits(out, tb)
        else:
            value, grad = mse(out, tb)
        net.backward(grad.reshape(out.shape), num_layers=depth)
        optimizer.step(net.parameters(), net.gradients())
        return value

    def _eval_loss(self, net, xv, tv) -> float:
        if xv.shape[0] == 0:
            return np.nan
        if self.task == "classification":
            depth = len(net.layers) - 1
            logits = self._batched_forward(net, xv, num_layers=depth)
            return bce_with_logits(logits, tv)[0]
        out = self._batched_forward(net, xv)
        return mse(out, tv)[0]

    def _batched_forward(self, net, X, num_layers=None) -> np.ndarray:
        outs = []
        for start in range(0, X.shape[0], self.batch_size):
            outs.append(net.forward(X[start:start + self.batch_size],
                                    train=False, num_layers=num_layers))
        return np.concatenate(outs).ravel()

    # -- inference ---------------------------------------------------------
    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise ValueError("estimator is not fitted")

    def predict_proba(self, X):
        self._check_fitted()
        if self.task != "classification":
            raise ValueError("predict_proba requires a classification model")
        X = self._prepare_inputs(X)
        return self._batched_forward(self.net_, X)

    def predict(self, X):
        self._check_fitted()
        X = self._prepare_inputs(X)
        out = self._batched_forward(self.net_, X)
        if self.task == "classification":
            return np.where(out > 0.5, 1, -1)
        return out

    def decision_function(self, X):
        """Pre-sigmoid logits for classification models."""
        self._check_fitted()
        if self.task != "classification":
            raise ValueError("decision_function requires a classification model")
        X = self._prepare_inputs(X)
        return self._batched_forward(self.net_, X,
                                     num_layers=len(self.net_.layers) - 1)


def save_model(path, model, parcellation_id: str | None = None) -> None:
    """Serialize a fitted estimator as a checkpoint.

    Ridge models are stored as an equivalent single dense layer so every
    family shares the same container format. ``parcellation_id`` overrides
    the identifier embedded in the checkpoint.
    """
    if isinstance(model, (RidgeClassifier, RidgeRegression)):
        task = "classification" if isinstance(model, RidgeClassifier) \
            else "regression"
        p = model.coef_.size
        layer = nn.Dense(p, 1)
        layer.weights = model.coef_.reshape(1, p).astype(np.float32)
        layer.bias = np.array([model.intercept_], dtype=np.float32)
        net = Network([layer], dtype=np.float32)
        meta = {"family": "ridge", "task": task,
                "parcellation_id": parcellation_id or "",
                "alpha": float(model.alpha),
                "fit_intercept": bool(model.fit_intercept)}
        save_network(path, net, meta)
        return
    if isinstance(model, ConnectomeNet):
        model._check_fitted()
        meta = {"family": model.family, "task": model.task,
                "parcellation_id": parcellation_id or model.parcellation_id,
                "input_shape": list(model.input_shape_)}
        save_network(path, model.net_, meta)
        return
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def load_model(path):
    """Inverse of :func:`save_model`; returns a fitted estimator."""
    net, meta = load_network(path, dtype=np.float32)
    family = meta.get("family")
    task = meta.get("task")
    if family == "ridge":
        cls = RidgeClassifier if task == "classification" else RidgeRegression
        model = cls(alpha=meta.get("alpha", 1.0),
                    fit_intercept=meta.get("fit_intercept", True))
        dense = net.layers[0]
        model.coef_ = dense.weights.ravel().astype(np.float64)
        model.intercept_ = float(dense.bias[0])
        return model
    model = ConnectomeNet(family=family, task=task,
                          parcellation_id=meta.get("parcellation_id", ""))
    model.net_ = net
    model.history_ = []
    model.input_shape_ = tuple(meta.get("input_shape", ()))
    model.n_features_in_ = int(np.prod(model.input_shape_)) \
        if model.input_shape_ else 0
    return model


def model_meta(path) -> dict:
    """Checkpoint metadata without touching the payload."""
    import json

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
    return header.get("meta", {})
