"""AdamW with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    """A gradient contained NaN or inf; the step was not applied."""


@dataclass
class AdamWState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-5
    step: int = 0
    exp_avg: list = field(default_factory=list)
    exp_avg_sq: list = field(default_factory=list)


class AdamW:
    """Adam with the decay applied directly to the weights (scaled by lr).

    Per parameter ``p`` with gradient ``g``::

        p -= lr * wd * p
        m = b1 m + (1 - b1) g ;  v = b2 v + (1 - b2) g^2
        p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=5e-5):
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        self.params = list(params)
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                weight_decay=weight_decay)
        self.state.exp_avg = [np.zeros_like(p.data) for p in self.params]
        self.state.exp_avg_sq = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                name = p.name or f"#{i}"
                raise NonFiniteGradient(f"non-finite gradient for parameter {name}")
            grads.append(g)
        st = self.state
        st.step += 1
        bc1 = 1 - st.beta1 ** st.step
        bc2 = 1 - st.beta2 ** st.step
        for p, g, m, v in zip(self.params, grads, st.exp_avg, st.exp_avg_sq):
            if st.weight_decay:
                p.data *= 1 - st.lr * st.weight_decay
            m *= st.beta1
            m += (1 - st.beta1) * g
            v *= st.beta2
            v += (1 - st.beta2) * g * g
            denom = np.sqrt(v / bc2) + st.eps
            p.data -= (st.lr * (m / bc1) / denom).astype(p.dtype, copy=False)
