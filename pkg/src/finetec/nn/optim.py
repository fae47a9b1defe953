"""Adam and Nesterov SGD with decoupled weight decay and a cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import NumericError, Tensor


@dataclass(frozen=True)
class CosineSchedule:
    lr_max: float
    lr_min: float
    horizon: int

    def __call__(self, step: int) -> float:
        if self.horizon <= 0:
            return self.lr_max
        step = min(max(step, 0), self.horizon)
        if step == self.horizon:
            return self.lr_min
        return self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + math.cos(math.pi * step / self.horizon))


class Optimizer:
    kind = ""

    def __init__(self, params: list[Tensor], schedule: CosineSchedule, weight_decay: float = 0.0):
        self.params = list(params)
        self.schedule = schedule
        self.weight_decay = weight_decay
        self.step_count = 0

    @property
    def lr(self) -> float:
        return self.schedule(self.step_count)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self):
        out = []
        for p in self.params:
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient at step {self.step_count}")
            out.append(g)
        return out

    def step(self) -> None:
        lr = self.lr
        grads = self._grads()
        updates = [self._update(i, g, lr) for i, g in enumerate(grads)]
        new = []
        for p, u in zip(self.params, updates):
            # decoupled decay: shrink the parameter directly, not via the gradient
            value = p.data - lr * self.weight_decay * p.data - u
            if not np.all(np.isfinite(value)):
                raise NumericError(f"non-finite parameter update at step {self.step_count}")
            new.append(value)
        for p, value in zip(self.params, new):
            p.data = value
        self.step_count += 1

    def _update(self, i: int, g: np.ndarray, lr: float) -> np.ndarray:
        raise NotImplementedError


class SGDNesterov(Optimizer):
    kind = "sgd_nesterov"

    def __init__(self, params, schedule, momentum: float = 0.9, weight_decay: float = 5e-4):
        super().__init__(params, schedule, weight_decay)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i, g, lr):
        buf = self.momentum * self.velocity[i] + g
        self.velocity[i] = buf
        return lr * (g + self.momentum * buf)


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, schedule, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 1e-4):
        super().__init__(params, schedule, weight_decay)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i, g, lr):
        t = self.step_count + 1
        self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
        self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
        m_hat = self.m[i] / (1 - self.beta1 ** t)
        v_hat = self.v[i] / (1 - self.beta2 ** t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)
