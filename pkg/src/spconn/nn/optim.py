"""Parameter update rules and stochastic weight averaging."""

from __future__ import annotations

import numpy as np


class Optimizer:
    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        raise NotImplementedError


class SgdMomentum(Optimizer):
    """Classic momentum: v <- mu v + g, p <- p - lr v."""

    def __init__(self, lr: float, momentum: float = 0.9):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[int, np.ndarray] = {}

    def step(self, params, grads):
        for i, (p, g) in enumerate(zip(params, grads)):
            v = self._velocity.get(i)
            if v is None:
                v = np.zeros_like(p)
                self._velocity[i] = v
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam(Optimizer):
    """Adam with bias correction (Kingma & Ba defaults)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._t = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def step(self, params, grads):
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self._t
        c2 = 1.0 - b2 ** self._t
        for i, (p, g) in enumerate(zip(params, grads)):
            m = self._m.setdefault(i, np.zeros_like(p))
            v = self._v.setdefault(i, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, lr: float, momentum: float = 0.9) -> Optimizer:
    if kind == "sgd_momentum":
        return SgdMomentum(lr, momentum)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer kind {kind!r}")


class SwaAverager:
    """Running elementwise average of parameter snapshots.

    Feed one snapshot per epoch inside the averaging window; ``finalize``
    returns the mean parameters.
    """

    def __init__(self):
        self._sums: list[np.ndarray] | None = None
        self.count = 0

    def update(self, params: list[np.ndarray]) -> None:
        if self._sums is None:
            self._sums = [np.array(p, dtype=np.float64) for p in params]
        else:
            for s, p in zip(self._sums, params):
                s += p
        self.count += 1

    def finalize(self) -> list[np.ndarray]:
        if self.count == 0:
            raise ValueError("no parameter snapshots accumulated")
        return [s / self.count for s in self._sums]
