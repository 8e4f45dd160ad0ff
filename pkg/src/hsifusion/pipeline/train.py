"""Training loop, flow pretraining and the synthetic-translation flow task."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..checkpoint import save_checkpoint
from ..engine import AdamW, Tensor, no_grad, smooth_l1, warp_bilinear
from ..io import write_csv
from ..nn.flow import PyramidFlow
from ..nn.model import HSIFN
from ..synth import render_scene
from .config import ConfigError, ExperimentConfig
from .data import DataItem, Dataset

LOSS_COLUMNS = ("step", "epoch", "item", "phase", "loss")


class TrainingDiverged(FloatingPointError):
    kind = "non-finite-loss"


@dataclass
class TrainResult:
    model: HSIFN
    losses: list = field(default_factory=list)  # rows of LOSS_COLUMNS
    flow_losses: list = field(default_factory=list)

    @property
    def loss_values(self) -> np.ndarray:
        return np.array([row[4] for row in self.losses], dtype=np.float64)


def random_crop(rng: np.random.Generator, h: int, w: int, size: int) -> tuple:
    """Slices for a ``size`` x ``size`` window; the whole image when ``size`` is 0 or too big."""
    if size <= 0 or size >= min(h, w):
        return slice(None), slice(None), slice(None)
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return slice(None), slice(y, y + size), slice(x, x + size)


def uses_flow(variant: str) -> bool:
    return variant in ("full", "no_attention")


def pretrain_flow(model: HSIFN, items: list, steps: int, crop: int, rng, lr: float = 1e-3) -> list:
    """Supervised training of the coarse estimator on the items' true flows."""
    items = [it for it in items if it.gt_flow is not None]
    if not items:
        raise ConfigError("flow pretraining needs items with ground-truth flow")
    opt = AdamW(model.flow1.parameters(), lr=lr, weight_decay=0.0)
    losses = []
    for step in range(steps):
        item = items[int(rng.integers(len(items)))]
        sl = random_crop(rng, item.h_hr.height, item.h_hr.width, crop)
        opt.zero_grad()
        flow = model.flow1(Tensor(item.r_ref.data[sl]), Tensor(item.r_hsi[sl]))
        loss = smooth_l1(flow, Tensor(item.gt_flow.data[sl]))
        loss.backward()
        opt.step()
        losses.append(float(loss.data))
    return losses


def scheduled_lr(base: float, decay_steps: int, step: int) -> float:
    """Cosine decay from ``base`` to zero over ``decay_steps``; constant when that is 0."""
    if decay_steps <= 0:
        return base
    t = min(step, decay_steps) / decay_steps
    return base * 0.5 * (1.0 + math.cos(math.pi * t))


def _step_inputs(item: DataItem, sl, hr_phase: bool):
    r_hsi = item.r_hsi_hr if hr_phase else item.r_hsi
    return item.h_up[sl], item.r_ref.data[sl], r_hsi[sl], item.h_hr.data[sl]


def train(config: ExperimentConfig, dataset: Dataset, log=None, save: bool = True) -> TrainResult:
    """Train one network variant; batch size one, seeded shuffling and crops.

    ``config.steps > 0`` fixes the number of optimizer steps, otherwise
    ``config.epochs`` passes over the training set are made.  The first
    ``hr_pretrain_epochs`` epochs feed the RGB rendering of the HR cube to the
    flow estimators and attention instead of the upsampled cube's rendering.
    """
    rng = np.random.default_rng(config.seed)
    model = HSIFN(config.net_config(), seed=config.seed, srf=dataset.srf)
    for item in dataset.train:
        item.prepare(dataset.srf)
    result = TrainResult(model)
    out = config.out
    if save:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    if config.flow_pretrain and uses_flow(config.variant):
        result.flow_losses = pretrain_flow(model, dataset.train, config.flow_pretrain_steps,
                                           config.flow_pretrain_crop, rng)
        if log:
            log(f"flow pretraining: {config.flow_pretrain_steps} steps, "
                f"final loss {result.flow_losses[-1]:.4f}")

    opt = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    n = len(dataset.train)
    total = config.steps if config.steps > 0 else config.epochs * n
    step = 0
    epoch = 0
    while step < total:
        hr_phase = epoch < config.hr_pretrain_epochs
        for idx in rng.permutation(n):
            if step >= total:
                break
            item = dataset.train[int(idx)]
            sl = random_crop(rng, item.h_hr.height, item.h_hr.width, config.crop)
            h_up, r_ref, r_hsi, target = _step_inputs(item, sl, hr_phase)
            opt.zero_grad()
            opt.state.lr = scheduled_lr(config.lr, config.lr_decay_steps, step)
            loss = smooth_l1(model.predict(h_up, r_ref, r_hsi, config.variant), Tensor(target))
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at step {step} on item {item.item_id}")
            loss.backward()
            opt.step()
            result.losses.append((step, epoch, item.item_id, "hr" if hr_phase else "lr", value))
            step += 1
        if save:
            save_checkpoint(out / "checkpoints" / "last.hsfn", model, opt,
                            extra={"epoch": epoch, "step": step, "variant": config.variant})
        if log:
            recent = [row[4] for row in result.losses[-n:]]
            log(f"epoch {epoch}: step {step}/{total}, mean loss {np.mean(recent):.6f}")
        epoch += 1

    if save:
        save_checkpoint(out / "model.hsfn", model, extra={"variant": config.variant, "steps": step})
        write_csv(out / "loss_curve.csv", LOSS_COLUMNS, result.losses)
        (out / "config.txt").write_text(config.to_text())
    return result


# -- synthetic translations -------------------------------------------------------

def translation_pair(rng: np.random.Generator, size: int, max_shift: float, srf_matrix: np.ndarray):
    """(source, target, flow) with ``target(p) = source(p + t)`` for a uniform shift ``t``."""
    bands = srf_matrix.shape[1]
    cube = render_scene(rng, bands, size, size)
    img = np.clip((srf_matrix @ cube.reshape(bands, -1)).reshape(3, size, size), 0, 1).astype(np.float32)
    t = rng.uniform(-max_shift, max_shift, 2).astype(np.float32)
    flow = np.broadcast_to(t[:, None, None], (2, size, size)).copy()
    target = warp_bilinear(Tensor(img), Tensor(flow)).data
    return img, target, flow


def pretrain_translations(estimator: PyramidFlow, steps: int, rng, srf_matrix: np.ndarray,
                          size: int = 64, max_shift: float = 4.0, lr: float = 1e-3) -> list:
    opt = AdamW(estimator.parameters(), lr=lr, weight_decay=0.0)
    losses = []
    for _ in range(steps):
        src, tgt, flow = translation_pair(rng, size, max_shift, srf_matrix)
        opt.zero_grad()
        loss = smooth_l1(estimator(Tensor(src), Tensor(tgt)), Tensor(flow))
        loss.backward()
        opt.step()
        losses.append(float(loss.data))
    return losses


def endpoint_error(estimator: PyramidFlow, source, target, flow, margin: int = 0) -> float:
    """Mean endpoint error, ignoring a ``margin``-pixel border."""
    with no_grad():
        pred = estimator(Tensor(source), Tensor(target)).data
    err = np.sqrt(((pred - flow) ** 2).sum(axis=0))
    if margin:
        err = err[margin:-margin, margin:-margin]
    return float(err.mean())
