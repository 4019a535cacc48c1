"""Adam with a cosine-annealed learning rate.

lr(t) = base_lr * 0.5 * (1 + cos(pi * t / T)), evaluated at the pre-increment
step counter, so the first update uses the full base rate and the update at
t = T moves nothing.
"""

from __future__ import annotations

import math

import numpy as np

from .params import ParamStore


class AdamState:
    def __init__(self, store: ParamStore, base_lr: float, total_steps: int,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if base_lr < 0:
            raise ValueError("learning rate must be >= 0")
        if total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        self.base_lr = base_lr
        self.total_steps = total_steps
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in store.items()}

    def lr(self) -> float:
        t = min(self.step_count, self.total_steps)
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * t / self.total_steps))


def adam_step(store: ParamStore, grads: dict, state: AdamState) -> None:
    """One Adam update over every unfrozen parameter with a gradient.

    Frozen parameters are untouched (values and moments). Moments follow the
    standard recurrences with bias correction.
    """
    lr = state.lr()
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, param in store.items():
        if store.is_frozen(name):
            continue
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != param.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' shape {param.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        param.data -= lr * mhat / (np.sqrt(vhat) + state.eps)
    state.step_count += 1
