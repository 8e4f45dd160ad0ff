"""Checkpoint files for the fusion network.

Layout (little-endian)::

    b"HSFN" | u32 version | u32 meta_len | meta (UTF-8 JSON)
    u32 n_blocks | n_blocks x block
    block := u16 name_len | name | u8 ndim | u32 x ndim dims | f32 payload

Parameter blocks carry the network weights.  When optimizer state is saved,
the AdamW moments follow as blocks named ``adam.m.<param>`` and
``adam.v.<param>``; the scalar hyperparameters and the step counter live in
the JSON metadata.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .degrade import Srf
from .engine import AdamW
from .io import BadMagicError, FormatError, TruncatedError, VersionError
from .nn.model import HSIFN, NetConfig

CKPT_MAGIC = b"HSFN"
CKPT_VERSION = 1


class CheckpointMismatch(VersionError):
    """The checkpoint was written for a network of a different shape."""

    kind = "version"


def _pack_block(name: str, arr: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    head = struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_checkpoint(path, model: HSIFN, optimizer: AdamW | None = None, extra: dict | None = None) -> None:
    meta = {
        "config": model.config.to_dict(),
        "srf": model.srf.matrix.tolist(),
        "extra": extra or {},
    }
    blocks = list(model.state_dict().items())
    if optimizer is not None:
        st = optimizer.state
        meta["optimizer"] = {"lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps,
                             "weight_decay": st.weight_decay, "step": st.step}
        names = [name for name, _ in model.named_parameters()]
        if len(names) != len(optimizer.params):
            raise ValueError("optimizer does not track exactly the model parameters")
        blocks += [(f"adam.m.{n}", m) for n, m in zip(names, st.exp_avg)]
        blocks += [(f"adam.v.{n}", v) for n, v in zip(names, st.exp_avg_sq)]
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<2I", CKPT_VERSION, len(meta_raw)))
        fh.write(meta_raw)
        fh.write(struct.pack("<I", len(blocks)))
        for name, arr in blocks:
            fh.write(_pack_block(name, np.asarray(arr)))


def read_checkpoint(path) -> tuple:
    """Return ``(meta, {name: float32 array})`` without building a network."""
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise BadMagicError(f"{path}: expected magic {CKPT_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < 12:
        raise TruncatedError(f"{path}: header truncated")
    version, meta_len = struct.unpack_from("<2I", raw, 4)
    if version != CKPT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    try:
        meta = json.loads(raw[pos:pos + meta_len].decode("utf-8"))
        pos += meta_len
        (n_blocks,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        blocks = {}
        for _ in range(n_blocks):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            if pos + 4 * count > len(raw):
                raise TruncatedError(f"{path}: block {name!r} truncated")
            blocks[name] = np.frombuffer(raw, "<f4", count, pos).astype(np.float32).reshape(shape)
            pos += 4 * count
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TruncatedError(f"{path}: corrupt or truncated checkpoint ({exc})") from exc
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return meta, blocks


def load_checkpoint(path, model: HSIFN | None = None, optimizer: AdamW | None = None) -> HSIFN:
    """Load weights (and optimizer moments when given) into ``model``.

    Without a model, one is built from the stored configuration.  A stored
    network whose parameter names or shapes differ raises ``CheckpointMismatch``.
    """
    meta, blocks = read_checkpoint(path)
    if model is None:
        model = HSIFN(NetConfig.from_dict(meta["config"]), srf=Srf(np.array(meta["srf"])))
    params = {k: v for k, v in blocks.items() if not k.startswith("adam.")}
    own = dict(model.named_parameters())
    if set(own) != set(params) or any(own[k].shape != params[k].shape for k in own):
        raise CheckpointMismatch(
            f"{path}: checkpoint network {meta.get('config')} is incompatible with {model.config.to_dict()}")
    model.load_state_dict(params)
    if optimizer is not None:
        if "optimizer" not in meta:
            raise FormatError(f"{path}: no optimizer state stored")
        st = optimizer.state
        o = meta["optimizer"]
        st.lr, st.beta1, st.beta2, st.eps = o["lr"], o["beta1"], o["beta2"], o["eps"]
        st.weight_decay, st.step = o["weight_decay"], o["step"]
        names = list(own)
        st.exp_avg = [blocks[f"adam.m.{n}"].copy() for n in names]
        st.exp_avg_sq = [blocks[f"adam.v.{n}"].copy() for n in names]
    return model


def checkpoint_meta(path) -> dict:
    return read_checkpoint(path)[0]
