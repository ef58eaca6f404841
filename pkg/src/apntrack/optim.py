"""Stochastic gradient descent with classical momentum."""

import numpy as np

from .errors import TrainingError


def clip_grad_norm(named_params, max_norm):
    """Scale all gradients in place so their global L2 norm is <= max_norm.

    Returns the pre-clip norm. No-op when max_norm is falsy.
    """
    total = 0.0
    for _, p in named_params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for _, p in named_params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class SGD:
    """v <- momentum*v + grad; param <- param - lr*v.

    Parameters excluded by the step filter keep both their values and
    their velocity untouched.
    """

    def __init__(self, named_params, lr, momentum=0.0):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        self.named_params = list(named_params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def zero_grad(self):
        for _, p in self.named_params:
            p.zero_grad()

    def step(self, lr=None, include=None):
        lr = self.lr if lr is None else lr
        for name, p in self.named_params:
            if include is not None and not include(name):
                continue
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite gradient in parameter '{name}'")
            v = self.velocity[name]
            v *= self.momentum
            v += grad
            p.data -= lr * v
