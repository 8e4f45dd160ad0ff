"""Shared helpers for gradient checks on the network modules."""
import numpy as np

from hsifusion.engine import Tensor, no_grad, tsum
from hsifusion.engine.gradcheck import check_gradients
from hsifusion.nn import HSIFN, NetConfig

TINY = dict(rgb_channels=3, hsi_channels=2, dec_channels=2, flow_channels=2, flow_hidden=3,
            att_flow_channels=2, att_reduce_channels=2, att_hidden=2)


def weighted(out, seed):
    return tsum(out * Tensor(np.random.default_rng(seed).normal(size=out.shape)))


def jitter(module, rng, scale=0.05):
    """Move every parameter off its initial value (zero heads, zero gains, zero biases)."""
    for p in module.parameters():
        p.data += rng.normal(0, scale, p.shape).astype(p.dtype)


def tiny_model(bands=4, dtype=np.float64, seed=0):
    return HSIFN(NetConfig(bands=bands, **TINY), seed=seed, dtype=dtype)


def full_network_gradient_error(seed=21, max_entries=3):
    """Relative error of the full network's gradients on a 4-band 16x16 instance (float64).

    Parameters are jittered so that flows are non-zero and off the integer grid,
    where bilinear sampling is differentiable.
    """
    rng = np.random.default_rng(seed)
    m = tiny_model(seed=seed)
    jitter(m, rng, 0.1)
    h_up = Tensor(rng.random((4, 16, 16)), requires_grad=True)
    r_ref = Tensor(rng.random((3, 16, 16)), requires_grad=True)
    r_hsi = Tensor(m.hsi_rgb(h_up.data), requires_grad=True)
    with no_grad():
        flows = m.align(r_ref, r_hsi)
    assert np.abs(flows[0].data).max() > 1e-3
    fn = lambda: weighted(m.forward(h_up, r_ref, r_hsi, "full"), 22)  # noqa: E731
    return check_gradients(fn, [h_up, r_ref, r_hsi] + m.parameters(), max_entries=max_entries,
                           rng=np.random.default_rng(seed))
