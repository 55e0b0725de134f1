"""Optimizers and the cosine learning-rate schedule.

SGD applies classic momentum with *coupled* weight decay (the decay term is
added to the gradient before the momentum update).  Adam applies *decoupled*
weight decay (a separate shrink step on the parameter, gradients untouched).
Parameters flagged ``weight_decay_exempt`` never receive decay.  A non-finite
gradient rejects the whole step with a diagnostic naming the parameter.
"""

import math

import numpy as np


def cosine_lr(epoch, total_epochs, base_lr):
    """Half-cosine decay: base_lr at epoch 0, 0 at epoch == total_epochs."""
    if total_epochs <= 0:
        raise ValueError(f"total_epochs must be positive, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return base_lr * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0


def _check_finite(name, grad):
    if not np.isfinite(grad).all():
        raise ValueError(
            f"non-finite gradient in parameter '{name}'; step rejected"
        )


class SGD:
    def __init__(self, named_params, lr, momentum=0.9, weight_decay=0.0):
        self.params = [(name, p) for name, p in named_params]
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.step_count = 0
        self._velocity = [np.zeros_like(p.data) for _, p in self.params]

    def step(self):
        for (name, p), vel in zip(self.params, self._velocity):
            _check_finite(name, p.grad)
            grad = p.grad
            if self.weight_decay and not p.weight_decay_exempt:
                grad = grad + self.weight_decay * p.data
            vel *= self.momentum
            vel += grad
            p.data -= self.lr * vel
        self.step_count += 1

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()


class Adam:
    """Adam with decoupled weight decay and standard bias correction."""

    def __init__(
        self,
        named_params,
        lr,
        betas=(0.9, 0.999),
        eps=1e-8,
        weight_decay=0.0,
    ):
        self.params = [(name, p) for name, p in named_params]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for _, p in self.params]
        self._v = [np.zeros_like(p.data) for _, p in self.params]

    def step(self):
        b1, b2 = self.betas
        t = self.step_count + 1
        corr1 = 1.0 - b1**t
        corr2 = 1.0 - b2**t
        for (name, p), m, v in zip(self.params, self._m, self._v):
            _check_finite(name, p.grad)
            grad = p.grad
            if self.weight_decay and not p.weight_decay_exempt:
                p.data -= self.lr * self.weight_decay * p.data
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            m_hat = m / corr1
            v_hat = v / corr2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.step_count += 1

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()
