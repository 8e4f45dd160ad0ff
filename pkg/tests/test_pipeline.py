import csv
import json

import numpy as np
import pytest

from hsifusion.checkpoint import load_checkpoint
from hsifusion.degrade import Srf
from hsifusion.nn import PyramidFlow
from hsifusion.pipeline import (
    ConfigError,
    ExperimentConfig,
    ablate,
    build_dataset,
    endpoint_error,
    evaluate,
    export_inference,
    parse_config,
    pretrain_translations,
    random_crop,
    scheduled_lr,
    single_pair_dataset,
    train,
    translation_pair,
)

TINY = dict(rgb_channels=3, hsi_channels=2, dec_channels=2, flow_channels=2, flow_hidden=3,
            att_flow_channels=2, att_reduce_channels=2, att_hidden=2)


def tiny_config(tmp_path, **changes):
    base = dict(TINY, bands=4, height=32, width=32, n_train=2, n_test=1, steps=3, crop=16,
                output_dir=str(tmp_path / "run"))
    base.update(changes)
    return ExperimentConfig(**base)


# -- configuration --------------------------------------------------------------

def test_parse_config_with_comments_and_overrides():
    cfg = parse_config("# toy run\nscale = 8\nlr=0.002  # faster\nflow_pretrain = yes\n", seed=7)
    assert (cfg.scale, cfg.lr, cfg.flow_pretrain, cfg.seed) == (8, 0.002, True, 7)


@pytest.mark.parametrize("text", ["scale = 3", "bogus = 1", "lr = fast", "no equals sign",
                                  "variant = tiny", "crop = 12", "flow_pretrain = maybe", "lr = 0",
                                  "lr_decay_steps = -1"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_text_round_trip():
    cfg = ExperimentConfig(scale=16, height=256, width=256, nonrigid=False, output_dir="x/y")
    assert parse_config(cfg.to_text()) == cfg


# -- data -------------------------------------------------------------------------

def test_dataset_is_deterministic_and_splits_are_disjoint(tmp_path):
    cfg = tiny_config(tmp_path, n_train=3, n_test=2)
    a, b = build_dataset(cfg), build_dataset(cfg)
    assert a.manifest == b.manifest
    for x, y in zip(a.train + a.test, b.train + b.test):
        assert x.h_lr.data.tobytes() == y.h_lr.data.tobytes()
        assert x.r_ref.data.tobytes() == y.r_ref.data.tobytes()
    train_seeds = {e["seed"] for e in a.manifest["train"]}
    test_seeds = {e["seed"] for e in a.manifest["test"]}
    assert not train_seeds & test_seeds
    item = a.train[0]
    assert item.h_lr.data.shape == (4, 8, 8) and item.r_ref.data.shape == (3, 32, 32)
    a.write_manifest(tmp_path / "m.json")
    assert json.loads((tmp_path / "m.json").read_text()) == a.manifest


def test_directory_dataset(tmp_path):
    from hsifusion.synth import synth_scene

    for i in range(3):
        synth_scene(i, bands=4, height=32, width=32).save(tmp_path / "scenes" / f"s{i}")
    cfg = tiny_config(tmp_path, dataset_dir=str(tmp_path / "scenes"), n_test=1)
    data = build_dataset(cfg)
    names = sorted(i.item_id for i in data.train + data.test)
    assert names == ["s0", "s1", "s2"] and len(data.test) == 1
    with pytest.raises(ConfigError):
        build_dataset(tiny_config(tmp_path, dataset_dir=str(tmp_path / "missing")))


def test_random_crop_bounds():
    rng = np.random.default_rng(0)
    for _ in range(50):
        _, ys, xs = random_crop(rng, 40, 48, 16)
        assert 0 <= ys.start and ys.stop <= 40 and ys.stop - ys.start == 16
        assert 0 <= xs.start and xs.stop <= 48 and xs.stop - xs.start == 16
    assert random_crop(rng, 16, 16, 0) == (slice(None),) * 3


# -- training and evaluation ------------------------------------------------------

def test_training_is_deterministic_and_writes_artifacts(tmp_path):
    cfg = tiny_config(tmp_path, flow_pretrain=True, flow_pretrain_steps=2, flow_pretrain_crop=16)
    data = build_dataset(cfg)
    r1 = train(cfg, data)
    r2 = train(cfg.replace(output_dir=str(tmp_path / "again")), build_dataset(cfg))
    assert r1.loss_values.tobytes() == r2.loss_values.tobytes()
    assert r1.flow_losses == r2.flow_losses
    out = cfg.out
    for name in ("model.hsfn", "loss_curve.csv", "config.txt", "checkpoints/last.hsfn"):
        assert (out / name).is_file()
    with open(out / "loss_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["step"]) for r in rows] == [0, 1, 2]
    assert (out / "model.hsfn").read_bytes() == (tmp_path / "again" / "model.hsfn").read_bytes()


def test_cosine_schedule():
    assert scheduled_lr(1e-3, 0, 500) == 1e-3
    assert scheduled_lr(1e-3, 100, 0) == 1e-3
    assert scheduled_lr(1e-3, 100, 50) == pytest.approx(5e-4)
    assert scheduled_lr(1e-3, 100, 100) == scheduled_lr(1e-3, 100, 400) == 0.0
    lrs = [scheduled_lr(1.0, 40, s) for s in range(41)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))


def test_short_run_is_prefix_of_long_run_under_decay(tmp_path):
    cfg = tiny_config(tmp_path, steps=4, lr_decay_steps=4)
    long = train(cfg, build_dataset(cfg), save=False).loss_values
    short = train(cfg.replace(steps=2), build_dataset(cfg), save=False).loss_values
    assert short.tobytes() == long[:2].tobytes()


def test_hr_pretrain_phase_is_labelled(tmp_path):
    cfg = tiny_config(tmp_path, steps=0, epochs=2, hr_pretrain_epochs=1)
    result = train(cfg, build_dataset(cfg), save=False)
    assert [row[3] for row in result.losses] == ["hr", "hr", "lr", "lr"]


def test_evaluate_reports(tmp_path):
    cfg = tiny_config(tmp_path)
    data = build_dataset(cfg)
    model = train(cfg, data).model
    rows = evaluate(model, data.test, tmp_path / "eval")
    assert rows[-1][0] == "mean" and len(rows) == len(data.test) + 1
    with open(tmp_path / "eval" / "report.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["id", "psnr", "ssim", "sam", "bicubic_psnr", "bicubic_ssim", "bicubic_sam"]
    with open(tmp_path / "eval" / "per_band.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4 * len(data.test)
    assert (tmp_path / "eval" / "visuals" / f"{data.test[0].item_id}_output.ppm").is_file()


def test_ablate_writes_table(tmp_path):
    cfg = tiny_config(tmp_path, steps=1, save_visuals=False)
    rows = ablate(cfg, build_dataset(cfg), ["full", "sisr_only"])
    assert [r[0] for r in rows] == ["full", "sisr_only", "bicubic"]
    with open(cfg.out / "ablation.csv") as fh:
        assert [r["variant"] for r in csv.DictReader(fh)] == ["full", "sisr_only", "bicubic"]


def test_export_inference(tmp_path):
    cfg = tiny_config(tmp_path, steps=1)
    data = single_pair_dataset(0, cfg)
    model = train(cfg, data).model
    item = data.test[0]
    cube = export_inference(model, item.h_lr, item.r_ref, 4, tmp_path / "inf")
    assert cube.data.shape == item.h_hr.data.shape
    for name in ("output.hsic", "output.ppm", "flow.flow", "attention_level0.pgm", "attention_level3.pgm"):
        assert (tmp_path / "inf" / name).is_file()
    assert load_checkpoint(cfg.out / "model.hsfn").config == model.config


# -- translation task -------------------------------------------------------------

def test_translation_pair_is_consistent():
    rng = np.random.default_rng(0)
    src, tgt, flow = translation_pair(rng, 32, 3.0, Srf.default(8).matrix)
    assert np.abs(flow[:, 0, 0]).max() <= 3.0 and np.all(flow == flow[:, :1, :1])
    est = PyramidFlow(2, 3, rng)
    assert endpoint_error(est, src, tgt, flow) == pytest.approx(float(np.hypot(*flow[:, 0, 0])), rel=1e-5)
    losses = pretrain_translations(est, 2, rng, Srf.default(8).matrix, size=32)
    assert len(losses) == 2 and all(np.isfinite(losses))
