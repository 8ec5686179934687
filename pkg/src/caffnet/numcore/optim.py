"""Adam with bias correction and a reduce-on-plateau learning-rate schedule."""
from __future__ import annotations

import math

import numpy as np


class Adam:
    """Adam over a name -> Tensor mapping.

    Gradients accumulate on the tensors; call :meth:`zero_grad` between steps.
    """

    def __init__(self, params, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / c1
            vhat = v / c2
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)


def adam_step(state, params=None):
    """Functional alias: apply one Adam update held in ``state``."""
    state.step()


class ReduceLROnPlateau:
    """Multiply the optimizer's lr by ``factor`` after ``patience`` epochs without improvement.

    The counter resets after each reduction.
    """

    def __init__(self, optimizer, factor=0.8, patience=2, min_lr=0.0):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0
        self.num_reductions = 0

    def step(self, val_loss):
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.optimizer.lr = max(self.optimizer.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
            self.num_reductions += 1
            return True
        return False


def plateau_update(scheduler, val_loss):
    return scheduler.step(val_loss)
