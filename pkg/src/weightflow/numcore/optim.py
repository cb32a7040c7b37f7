"""Adam with bias correction, as a stateful optimizer and a pure step function."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigError
from .tensor import Param


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], m: list[np.ndarray],
              v: list[np.ndarray], lr: float, beta1: float, beta2: float, eps: float,
              step_count: int) -> list[np.ndarray]:
    """Return updated parameter arrays; ``m``/``v`` are updated in place.

    ``step_count`` is the 1-based index of this update.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if step_count < 1:
        raise ConfigError("step_count is 1-based")
    c1 = 1.0 - beta1 ** step_count
    c2 = 1.0 - beta2 ** step_count
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g)
        out.append(p - lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps))
    return out


class Adam:
    def __init__(self, params: Sequence[Param], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        new = adam_step([p.data for p in self.params], [p.grad for p in self.params],
                        self.m, self.v, self.lr, self.beta1, self.beta2, self.eps, self.t)
        for p, d in zip(self.params, new):
            p.data = d

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}
