"""Central finite-difference verification of layer and loss gradients.

The check contracts a layer output against a fixed random cotangent to get
a scalar objective, then compares analytic gradients with central
differences. Errors are reported as ||a - n|| / (||a|| + ||n||); run in
float64 for meaningful tolerances.
"""

from __future__ import annotations

import numpy as np

DEFAULT_STEP = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def finite_difference(scalar_fn, x: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of ``scalar_fn`` with respect to ``x``.

    ``x`` is perturbed in place element by element and restored afterwards.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = scalar_fn()
        flat[i] = orig - step
        lo = scalar_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def check_layer(layer, x: np.ndarray, train: bool = False,
                step: float = DEFAULT_STEP, seed: int = 0) -> dict[str, float]:
    """Relative FD error for the input and every parameter of a layer.

    Returns a mapping {'input': err, 'param0': err, ...}. The layer must
    already hold float64 parameters.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64)
    y = layer.forward(x, train=train)
    cotangent = rng.standard_normal(y.shape)

    def objective():
        return float(np.sum(layer.forward(x, train=train) * cotangent))

    grad_x = layer.backward(cotangent)
    analytic_params = [g.copy() for g in layer.grads()]
    errors = {"input": relative_error(grad_x, finite_difference(objective, x, step))}
    for i, p in enumerate(layer.params()):
        errors[f"param{i}"] = relative_error(
            analytic_params[i], finite_difference(objective, p, step))
    return errors


def check_loss(loss_fn, pred: np.ndarray, target: np.ndarray,
               step: float = DEFAULT_STEP) -> float:
    """Relative FD error of a (value, grad) loss function at ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    _, grad = loss_fn(pred, target)

    def objective():
        return loss_fn(pred, target)[0]

    numeric = finite_difference(objective, pred, step)
    return relative_error(grad.reshape(pred.shape), numeric)
