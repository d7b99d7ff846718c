"""Gradient-based optimizers over named parameter arrays.

Both update in place and are fully deterministic given the gradient
sequence. State arrays live in the parameter dtype.
"""

from __future__ import annotations

import numpy as np


class Adam:
    """ADAM with bias correction. Defaults: beta1 0.9, beta2 0.999, eps 1e-8."""

    def __init__(self, params: dict[str, np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name, g in grads.items():
            p = self.params[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


class MomentumSGD:
    """Classic momentum: v = mu * v + g; p -= lr * v."""

    def __init__(self, params: dict[str, np.ndarray], learning_rate: float, momentum: float = 0.2):
        self.params = params
        self.lr = learning_rate
        self.momentum = momentum
        self._v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            v = self._v[name]
            v *= self.momentum
            v += g
            self.params[name] -= (self.lr * v).astype(self.params[name].dtype)
