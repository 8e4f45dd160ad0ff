"""Dataset assembly: scene pairs -> (H_lr, R_ref, H_hr, gt_flow) items with a fixed split."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..degrade import Srf, degrade, histogram_match, srf_project
from ..io import FlowField, HsiCube, RgbImage, bicubic_resize
from ..synth import ScenePair, synth_scene
from .config import ConfigError, ExperimentConfig

# per-scene seeds are drawn from a disjoint range for each split
TEST_SEED_OFFSET = 100_000


@dataclass
class DataItem:
    item_id: str
    h_lr: HsiCube
    r_ref: RgbImage
    h_hr: HsiCube
    gt_flow: FlowField | None
    scale: int
    # cached network inputs, filled by ``prepare``
    h_up: np.ndarray | None = None
    r_hsi: np.ndarray | None = None
    r_hsi_hr: np.ndarray | None = None

    def prepare(self, srf: Srf) -> "DataItem":
        """Bicubic upsampling and the SRF renderings used as flow targets."""
        if self.h_up is None:
            self.h_up = bicubic_resize(self.h_lr, self.scale).data
            self.r_hsi = srf_project(HsiCube(self.h_up), srf).data
            self.r_hsi_hr = srf_project(self.h_hr, srf).data
        return self


@dataclass
class Dataset:
    train: list
    test: list
    srf: Srf
    manifest: dict

    def write_manifest(self, path) -> None:
        Path(path).write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")


def make_item(item_id: str, pair: ScenePair, srf: Srf, scale: int) -> DataItem:
    hr = pair.hr_cube
    r_ref = histogram_match(srf_project(pair.ref_cube, srf), srf_project(hr, srf))
    return DataItem(item_id, degrade(hr, scale), r_ref, hr, pair.gt_flow, scale)


def load_srf(config: ExperimentConfig) -> Srf:
    if config.srf_csv:
        srf = Srf.from_csv(config.srf_csv)
        if srf.bands != config.bands:
            raise ConfigError(f"SRF file has {srf.bands} bands, config says {config.bands}")
        return srf
    return Srf.default(config.bands)


def _synthetic_pairs(config: ExperimentConfig):
    common = dict(bands=config.bands, height=config.height, width=config.width,
                  max_disp=config.max_disp, nonrigid=config.nonrigid)
    base = config.seed * 1000
    train = [(f"train_{i:03d}", base + i) for i in range(config.n_train)]
    test = [(f"test_{i:03d}", TEST_SEED_OFFSET + base + i) for i in range(config.n_test)]
    for split in (train, test):
        yield [(item_id, synth_scene(seed, **common), seed) for item_id, seed in split]


def _directory_pairs(config: ExperimentConfig):
    root = Path(config.dataset_dir)
    if not root.is_dir():
        raise ConfigError(f"dataset directory not found: {root}")
    scenes = sorted(p for p in root.iterdir() if (p / "hr.hsic").is_file())
    if len(scenes) < 2:
        raise ConfigError(f"{root}: need at least two scene folders containing hr.hsic")
    order = np.random.default_rng(config.seed).permutation(len(scenes))
    n_test = min(config.n_test, len(scenes) - 1)
    picked = [scenes[i] for i in order]
    test, train = picked[:n_test], picked[n_test:n_test + config.n_train]
    for split in (sorted(train), sorted(test)):
        yield [(p.name, ScenePair.load(p), -1) for p in split]


def build_dataset(config: ExperimentConfig) -> Dataset:
    """Deterministic train/test items for ``config``; the manifest records the split."""
    srf = load_srf(config)
    source = _directory_pairs if config.dataset_dir else _synthetic_pairs
    splits = []
    manifest = {"scale": config.scale, "seed": config.seed, "source": config.dataset_dir or "synthetic"}
    for name, pairs in zip(("train", "test"), source(config)):
        items = []
        for item_id, pair, scene_seed in pairs:
            h, w = pair.hr_cube.height, pair.hr_cube.width
            if h % (8 * config.scale) or w % (8 * config.scale):
                raise ConfigError(f"{item_id}: {h}x{w} not divisible by 8 * scale")
            items.append(make_item(item_id, pair, srf, config.scale))
        splits.append(items)
        manifest[name] = [{"id": i.item_id, "seed": s} for i, (_, _, s) in zip(items, pairs)]
    return Dataset(splits[0], splits[1], srf, manifest)


def single_pair_dataset(seed: int, config: ExperimentConfig) -> Dataset:
    """One synthetic scene used as both training and test set (overfitting checks)."""
    pair = synth_scene(seed, bands=config.bands, height=config.height, width=config.width,
                       max_disp=config.max_disp, nonrigid=config.nonrigid)
    srf = load_srf(config)
    item = make_item(f"scene_{seed}", pair, srf, config.scale)
    manifest = {"scale": config.scale, "seed": seed, "source": "synthetic",
                "train": [{"id": item.item_id, "seed": seed}], "test": [{"id": item.item_id, "seed": seed}]}
    return Dataset([item], [item], srf, manifest)
