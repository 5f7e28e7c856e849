from __future__ import annotations

import numpy as np

from .functional import ContractError


class AdamW:
    """Adam with decoupled weight decay and bias correction.

    Parameters whose ``grad`` is ``None`` after the backward pass were not
    reached by the loss and are skipped entirely, weight decay included.
    """

    def __init__(self, params, lr=5e-4, weight_decay=5e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.state = {}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        live = [p for p in self.params if p.grad is not None]
        if not live:
            raise ContractError("AdamW.step: no parameter has a gradient")
        self.step_count += 1
        adamw_step(live, self.lr, self.weight_decay, self.betas, self.step_count,
                   self.state, self.eps)


def adamw_step(params, lr, weight_decay, betas, step_count, state=None, eps=1e-8):
    """One AdamW update in place. ``state`` maps id(param) -> (m, v) moments."""
    state = {} if state is None else state
    b1, b2 = betas
    for p in params:
        if p.grad is None:
            raise ContractError(f"adamw_step: parameter {p.name!r} has no gradient")
        g = p.grad
        m, v = state.get(id(p), (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state[id(p)] = (m, v)
        m_hat = m / (1 - b1 ** step_count)
        v_hat = v / (1 - b2 ** step_count)
        p.data = p.data * (1 - lr * weight_decay) - lr * m_hat / (np.sqrt(v_hat) + eps)
