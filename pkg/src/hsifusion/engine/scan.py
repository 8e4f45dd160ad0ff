"""Gated recurrence along the spectral axis, fused into a single graph node."""
from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor, make_node


def qru_scan(gate: Tensor, cand: Tensor, reverse: bool = False) -> Tensor:
    """Run ``h_b = (1 - w_b) * h_{b-1} + w_b * f_b`` over axis 1 with ``h_0 = 0``.

    ``gate`` and ``cand`` are ``[C, B, H, W]``.  With ``reverse=True`` the bands
    are visited from last to first.
    """
    if gate.shape != cand.shape or gate.ndim != 4:
        raise ContractError(f"qru_scan: gate {gate.shape} vs candidate {cand.shape}")
    w, f = gate.data, cand.data
    nb = w.shape[1]
    order = range(nb - 1, -1, -1) if reverse else range(nb)
    out = np.empty_like(w)
    prev = np.zeros_like(w[:, 0])
    for b in order:
        prev = (1 - w[:, b]) * prev + w[:, b] * f[:, b]
        out[:, b] = prev

    def backward(g):
        gw = np.empty_like(w)
        gf = np.empty_like(f)
        carry = np.zeros_like(w[:, 0])
        visited = list(order)
        for i in range(nb - 1, -1, -1):
            b = visited[i]
            h_prev = out[:, visited[i - 1]] if i > 0 else 0.0
            total = g[:, b] + carry
            gw[:, b] = total * (f[:, b] - h_prev)
            gf[:, b] = total * w[:, b]
            carry = total * (1 - w[:, b])
        return gw, gf

    return make_node(out, (gate, cand), backward)
