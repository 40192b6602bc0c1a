"""Central finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(fn, inputs, eps=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. each tensor in ``inputs``.

    ``fn`` must rebuild its graph from the current ``.data`` of the inputs.
    """
    grads = []
    for t in inputs:
        base = t.data.copy()
        g = np.zeros_like(base)
        flat = g.reshape(-1)
        for idx in range(base.size):
            pert = base.copy().reshape(-1)
            pert[idx] += eps
            t.data = pert.reshape(base.shape)
            hi = float(fn().data)
            pert[idx] -= 2 * eps
            t.data = pert.reshape(base.shape)
            lo = float(fn().data)
            flat[idx] = (hi - lo) / (2 * eps)
        t.data = base
        grads.append(g)
    return grads


def analytic_grad(fn, inputs):
    for t in inputs:
        t.grad = None
    loss = fn()
    backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(fn, inputs, eps=1e-5):
    """Return the worst relative error between analytic and numerical gradients."""
    inputs = [t for t in inputs if isinstance(t, Tensor)]
    ana = analytic_grad(fn, inputs)
    num = numerical_grad(fn, inputs, eps=eps)
    return max(relative_error(a, n) for a, n in zip(ana, num))
