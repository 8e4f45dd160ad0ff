import numpy as np
import pytest

from hsifusion.checkpoint import (
    CheckpointMismatch,
    checkpoint_meta,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from hsifusion.engine import AdamW, Tensor, smooth_l1
from hsifusion.io import BadMagicError, TruncatedError, VersionError
from hsifusion.nn import HSIFN, NetConfig

TINY = dict(bands=4, rgb_channels=3, hsi_channels=2, dec_channels=2, flow_channels=2, flow_hidden=3,
            att_flow_channels=2, att_reduce_channels=2, att_hidden=2)


def _trained(seed=0):
    m = HSIFN(NetConfig(**TINY), seed=seed)
    opt = AdamW(m.parameters(), lr=1e-3)
    rng = np.random.default_rng(seed)
    h_up = rng.random((4, 16, 16), dtype=np.float32)
    r = rng.random((3, 16, 16), dtype=np.float32)
    for _ in range(2):
        opt.zero_grad()
        smooth_l1(m.predict(h_up, r, m.hsi_rgb(h_up)), Tensor(h_up)).backward()
        opt.step()
    return m, opt


def test_round_trip_is_bit_exact(tmp_path):
    m, opt = _trained()
    save_checkpoint(tmp_path / "a.hsfn", m, opt, extra={"epoch": 3})
    fresh = HSIFN(NetConfig(**TINY), seed=99)
    fresh_opt = AdamW(fresh.parameters(), lr=0.5)
    load_checkpoint(tmp_path / "a.hsfn", fresh, fresh_opt)
    for (n1, p1), (n2, p2) in zip(m.named_parameters(), fresh.named_parameters()):
        assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()
    for a, b in zip(opt.state.exp_avg + opt.state.exp_avg_sq, fresh_opt.state.exp_avg + fresh_opt.state.exp_avg_sq):
        assert np.asarray(a).tobytes() == np.asarray(b).tobytes()
    assert fresh_opt.state.step == opt.state.step and fresh_opt.state.lr == opt.state.lr
    save_checkpoint(tmp_path / "b.hsfn", fresh, fresh_opt, extra={"epoch": 3})
    assert (tmp_path / "a.hsfn").read_bytes() == (tmp_path / "b.hsfn").read_bytes()
    assert checkpoint_meta(tmp_path / "a.hsfn")["extra"] == {"epoch": 3}


def test_model_rebuilt_from_metadata(tmp_path):
    m, _ = _trained(1)
    save_checkpoint(tmp_path / "m.hsfn", m)
    back = load_checkpoint(tmp_path / "m.hsfn")
    assert back.config == m.config
    assert back.srf.matrix.tobytes() == m.srf.matrix.tobytes()
    x = np.random.default_rng(2).random((4, 16, 16), dtype=np.float32)
    r = np.random.default_rng(3).random((3, 16, 16), dtype=np.float32)
    assert m.forward(x, r, m.hsi_rgb(x)).data.tobytes() == back.forward(x, r, back.hsi_rgb(x)).data.tobytes()


def test_errors(tmp_path):
    m, _ = _trained()
    save_checkpoint(tmp_path / "m.hsfn", m)
    raw = (tmp_path / "m.hsfn").read_bytes()
    (tmp_path / "magic.hsfn").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(BadMagicError):
        read_checkpoint(tmp_path / "magic.hsfn")
    (tmp_path / "short.hsfn").write_bytes(raw[:-10])
    with pytest.raises(TruncatedError):
        read_checkpoint(tmp_path / "short.hsfn")
    (tmp_path / "ver.hsfn").write_bytes(raw[:4] + (7).to_bytes(4, "little") + raw[8:])
    with pytest.raises(VersionError):
        read_checkpoint(tmp_path / "ver.hsfn")
    other = HSIFN(NetConfig(**{**TINY, "hsi_channels": 3}))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(tmp_path / "m.hsfn", other)
