"""First-order optimizers over flat real parameter vectors.

Both expose step(grad) -> additive update; state lives in the instance, so
a restart means constructing a fresh optimizer.
"""

import numpy as np


class GradientDescent:
    def __init__(self, n_params, step_size):
        self.step_size = float(step_size)

    def step(self, grad):
        return -self.step_size * np.asarray(grad)


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, n_params, step_size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0
        self.step_size = float(step_size)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, grad):
        grad = np.asarray(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return -self.step_size * mhat / (np.sqrt(vhat) + self.eps)


OPTIMIZERS = {"adam": Adam, "sgd": GradientDescent}


def make_optimizer(name, n_params, step_size):
    try:
        return OPTIMIZERS[name](n_params, step_size)
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}")
