"""Adam and SGD with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParameterSet


@dataclass
class OptimizerState:
    algorithm: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")


def optimizer_step(state: OptimizerState, params: ParameterSet) -> ParameterSet:
    """Apply one update in place, then zero the gradients."""
    state.step += 1
    lr = state.lr
    for name, p in params.items():
        g = p.grad
        if state.weight_decay:
            p.value *= p.value.dtype.type(1.0 - lr * state.weight_decay)
        if state.algorithm == "sgd":
            p.value -= (lr * g).astype(p.dtype)
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** state.step)
        v_hat = v / (1 - state.beta2 ** state.step)
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    params.zero_grad()
    return params
