"""Central finite-difference checking for engine ops."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numeric_grad(fn, tensors, eps=1e-6, max_entries=None, rng=None):
    """Central differences of scalar ``fn()`` w.r.t. entries of each tensor.

    With ``max_entries`` only a random subset of entries per tensor is probed;
    the returned arrays hold NaN elsewhere.
    """
    out = []
    for t in tensors:
        g = np.full(t.shape, np.nan)
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(fn().data)
            flat[i] = orig - eps
            fm = float(fn().data)
            flat[i] = orig
            g.reshape(-1)[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def max_rel_error(analytic, numeric, floor=1e-8) -> float:
    mask = ~np.isnan(numeric)
    a = np.asarray(analytic)[mask]
    n = numeric[mask]
    scale = max(np.max(np.abs(n)), np.max(np.abs(a)), floor)
    return float(np.max(np.abs(a - n)) / scale)


def check_gradients(fn, tensors, eps=1e-6, max_entries=None, rng=None) -> float:
    """Return the worst relative error between backward and finite differences.

    The error of each tensor is normalised by that tensor's largest gradient
    magnitude, so entries with vanishing gradient do not blow up the ratio.
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    loss.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    numeric = numeric_grad(fn, tensors, eps=eps, max_entries=max_entries, rng=rng)
    return max(max_rel_error(a, n) for a, n in zip(analytic, numeric))


def random_tensor(rng, shape, scale=1.0) -> Tensor:
    return Tensor(rng.normal(0, scale, size=shape), requires_grad=True)
