"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(
    fn, inputs, h: float = 1e-5, max_checks: int | None = None, atol: float = 1e-8
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps the input Tensors to a scalar Tensor and is re-evaluated with
    elementwise perturbations of +-h; inputs must be float64 for the stated
    tolerances to be meaningful. ``max_checks`` caps the number of elements
    probed per input (deterministic subsample for large tensors).

    Relative error per element: |analytic - numeric| / (|a| + |n| + 1e-12).
    Differences below ``atol`` are counted as exact: central differences
    resolve nothing finer than eps*|f|/(2h) (~1e-11 at unit scale), so for
    components whose true gradient is identically zero (e.g. a key-projection
    bias under softmax shift invariance) the ratio would measure only noise.
    """
    out = fn(*inputs)
    if out.data.size != 1:
        raise ValueError("grad_check expects a scalar-valued function")
    for t in inputs:
        t.grad = None
    out.backward()

    worst = 0.0
    picker = np.random.default_rng(181818)
    for t in inputs:
        flat = t.data.reshape(-1)
        analytic = (
            t.grad.reshape(-1) if t.grad is not None else np.zeros_like(flat)
        )
        n = flat.size
        if max_checks is not None and n > max_checks:
            indices = np.sort(picker.choice(n, size=max_checks, replace=False))
        else:
            indices = range(n)
        for i in indices:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn(*inputs).data)
            flat[i] = orig - h
            f_minus = float(fn(*inputs).data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            diff = abs(analytic[i] - numeric)
            if diff <= atol:
                continue
            err = diff / (abs(analytic[i]) + abs(numeric) + 1e-12)
            worst = max(worst, float(err))
    return worst
