"""Finite-difference verification of analytic gradients.

The checker is the independent oracle for every differentiable operation:
central differences in double precision against one reverse-mode pass.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def finite_diff_check(fn, point: Tensor, step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    `fn` must map a Tensor to a scalar Tensor, deterministically. Returns
    max over coordinates of |analytic - numeric| / max(1, |analytic|).
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")

    base = np.array(point.data, dtype=np.float64)
    with no_grad():
        out_a = fn(Tensor(base.copy()))
        out_b = fn(Tensor(base.copy()))
    if not isinstance(out_a, Tensor) or out_a.data.size != 1:
        raise ValueError("fn must return a scalar tensor")
    if not np.array_equal(out_a.data, out_b.data):
        raise ValueError("fn is not deterministic; cannot finite-difference it")

    x = Tensor(base.copy(), requires_grad=True)
    loss = fn(x)
    if loss.data.size != 1:
        raise ValueError("fn must return a scalar tensor")
    loss.backward()
    analytic = np.zeros_like(base) if x.grad is None else x.grad

    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    num_flat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = fn(Tensor(base.copy())).item()
            flat[i] = orig - step
            f_minus = fn(Tensor(base.copy())).item()
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)

    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
