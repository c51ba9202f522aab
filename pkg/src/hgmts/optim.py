"""Adam optimizer over named parameters."""

from __future__ import annotations

import numpy as np

from .autodiff import ContractError
from .nn import Parameter


class AdamState:
    """Per-parameter first/second moment buffers plus the step counter.

    Defaults follow the usual convention: beta1=0.9, beta2=0.999, eps=1e-8.
    ``lr`` is mutable so a schedule can adjust it between steps.
    """

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {p.name: np.zeros_like(p.values) for p in params}
        self.v = {p.name: np.zeros_like(p.values) for p in params}


def adam_step(state: AdamState, params: list[Parameter]) -> None:
    """One bias-corrected Adam update in place; gradients are zeroed after."""
    for p in params:
        if p.tensor.grad is None:
            raise ContractError(f"adam_step: parameter {p.name} has no gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p in params:
        g = p.tensor.grad
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.tensor.values = p.tensor.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.tensor.grad = None
