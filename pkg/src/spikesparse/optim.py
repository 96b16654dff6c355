"""First-order optimizers over lists of leaf tensors."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tape import Tensor

OPTIMIZERS = ("sgd", "sgd_momentum", "adam")


class Optimizer:
    kind = ""

    def __init__(self, params: Sequence[Tensor], lr: float):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.steps = 0

    def step(self) -> None:
        self.steps += 1
        for i, p in enumerate(self.params):
            if p.grad is not None:
                p.data = p.data - self._update(i, p.grad)

    def _update(self, i: int, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state(self, steps: int, arrays: dict[str, np.ndarray]) -> None:
        self.steps = steps


class SGD(Optimizer):
    kind = "sgd"

    def _update(self, i, g):
        return self.lr * g


class Momentum(Optimizer):
    """Heavy-ball momentum: v = mu*v + g, p -= lr*v."""

    kind = "sgd_momentum"

    def __init__(self, params, lr, momentum=0.9):
        super().__init__(params, lr)
        self.momentum = momentum
        self.velocity = [np.zeros(p.shape) for p in self.params]

    def _update(self, i, g):
        self.velocity[i] = self.momentum * self.velocity[i] + g
        return self.lr * self.velocity[i]

    def state_arrays(self):
        return {f"velocity.{i}": v for i, v in enumerate(self.velocity)}

    def load_state(self, steps, arrays):
        super().load_state(steps, arrays)
        self.velocity = [np.array(arrays[f"velocity.{i}"]) for i in range(len(self.params))]


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def _update(self, i, g):
        b1, b2, t = self.beta1, self.beta2, self.steps
        self.m[i] = b1 * self.m[i] + (1 - b1) * g
        self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
        m_hat = self.m[i] / (1 - b1 ** t)
        v_hat = self.v[i] / (1 - b2 ** t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self):
        out = {f"m.{i}": m for i, m in enumerate(self.m)}
        out.update({f"v.{i}": v for i, v in enumerate(self.v)})
        return out

    def load_state(self, steps, arrays):
        super().load_state(steps, arrays)
        n = len(self.params)
        self.m = [np.array(arrays[f"m.{i}"]) for i in range(n)]
        self.v = [np.array(arrays[f"v.{i}"]) for i in range(n)]


def make_optimizer(kind: str, params: Sequence[Tensor], lr: float, momentum: float = 0.9,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Optimizer:
    if kind == "sgd":
        return SGD(params, lr)
    if kind == "sgd_momentum":
        return Momentum(params, lr, momentum)
    if kind == "adam":
        return Adam(params, lr, beta1, beta2, eps)
    raise ValueError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
