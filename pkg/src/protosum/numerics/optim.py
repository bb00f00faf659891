"""Adam with the inverse-square-root warmup schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def scheduled_lr(step: int, d_model: int, warmup: int, scale: float = 1.0) -> float:
    """scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5); peaks at ``step == warmup``."""
    if step < 1:
        raise ValueError("learning-rate schedule is defined from step 1")
    return scale * d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


@dataclass
class AdamState:
    d_model: int
    warmup: int = 4000
    scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def lr(self) -> float:
        return scheduled_lr(max(self.step, 1), self.d_model, self.warmup, self.scale)


def adam_step(state: AdamState, params: dict, grads: dict[str, np.ndarray]) -> float:
    """Update ``params`` (name -> Tensor) in place; returns the learning rate used."""
    state.step += 1
    lr = scheduled_lr(state.step, state.d_model, state.warmup, state.scale)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return lr
