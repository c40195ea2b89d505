"""Adam optimizer over Parameter lists."""

from __future__ import annotations

import numpy as np


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8, t=1):
    """Bias-corrected Adam update in place; parameters without grads are left

    untouched. ``t`` is the 1-based step counter.
    """
    if t < 1:
        raise ValueError("adam step counter must be >= 1")
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p in params:
        g = p.tensor.grad
        if g is None:
            continue
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        update = (p.m / bc1) / (np.sqrt(p.v / bc2) + eps)
        p.tensor.data = p.tensor.data - lr * update


def zero_grads(params):
    for p in params:
        p.tensor.grad = None
