"""Evaluation reports, ablation runs and inference exports."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..degrade import srf_project
from ..engine import no_grad
from ..io import HsiCube, RgbImage, export_pgm, export_ppm, write_csv
from ..metrics import psnr_per_band, sam, ssim_per_band
from ..nn.model import HSIFN
from .config import ExperimentConfig
from .data import DataItem, Dataset
from .train import train

REPORT_COLUMNS = ("id", "psnr", "ssim", "sam", "bicubic_psnr", "bicubic_ssim", "bicubic_sam")
BAND_COLUMNS = ("id", "band", "psnr", "ssim", "bicubic_psnr", "bicubic_ssim")
ABLATION_COLUMNS = ("variant", "psnr", "ssim", "sam")


def super_resolve(model: HSIFN, item: DataItem, variant: str = "full", aux: dict | None = None) -> np.ndarray:
    item.prepare(model.srf)
    with no_grad():
        out = model.predict(item.h_up, item.r_ref.data, item.r_hsi, variant, aux)
    return out.data.astype(np.float32)


def evaluate(model: HSIFN, items: list, out_dir=None, variant: str = "full",
             save_visuals: bool = True) -> list:
    """Per-item model and bicubic metrics plus a final ``mean`` row.

    With ``out_dir`` set, writes ``report.csv``, ``per_band.csv`` and, when
    ``save_visuals`` is true, reference/bicubic/output PPM triplets.
    """
    rows, band_rows = [], []
    for item in items:
        pred = super_resolve(model, item, variant)
        hr = item.h_hr.data
        bic = np.clip(item.h_up, 0.0, 1.0)
        p_m, s_m = psnr_per_band(pred, hr), ssim_per_band(pred, hr)
        p_b, s_b = psnr_per_band(bic, hr), ssim_per_band(bic, hr)
        rows.append((item.item_id, float(p_m.mean()), float(s_m.mean()), sam(pred, hr),
                     float(p_b.mean()), float(s_b.mean()), sam(bic, hr)))
        band_rows += [(item.item_id, b, float(p_m[b]), float(s_m[b]), float(p_b[b]), float(s_b[b]))
                      for b in range(hr.shape[0])]
        if out_dir is not None and save_visuals:
            vis = Path(out_dir) / "visuals"
            vis.mkdir(parents=True, exist_ok=True)
            export_ppm(item.r_ref, vis / f"{item.item_id}_reference.ppm")
            export_ppm(srf_project(HsiCube(bic), model.srf), vis / f"{item.item_id}_bicubic.ppm")
            export_ppm(srf_project(HsiCube(pred), model.srf), vis / f"{item.item_id}_output.ppm")
    means = np.mean(np.array([r[1:] for r in rows], dtype=np.float64), axis=0)
    rows.append(("mean",) + tuple(float(v) for v in means))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "report.csv", REPORT_COLUMNS, rows)
        write_csv(out / "per_band.csv", BAND_COLUMNS, band_rows)
    return rows


def ablate(config: ExperimentConfig, dataset: Dataset, variants, log=None) -> list:
    """Train and evaluate each variant with the same seed and data.

    Returns rows of ``ABLATION_COLUMNS`` (mean test metrics) followed by a
    ``bicubic`` row, and writes ``ablation.csv`` under the output directory.
    """
    variants = list(variants)
    if not variants:
        raise ValueError("no variants requested")
    rows = []
    bicubic = None
    for variant in variants:
        cfg = config.replace(variant=variant, output_dir=str(config.out / variant))
        if log:
            log(f"training variant {variant}")
        result = train(cfg, dataset, log=log)
        report = evaluate(result.model, dataset.test, cfg.out, variant, cfg.save_visuals)
        mean = report[-1]
        rows.append((variant, mean[1], mean[2], mean[3]))
        bicubic = ("bicubic", mean[4], mean[5], mean[6])
    rows.append(bicubic)
    config.out.mkdir(parents=True, exist_ok=True)
    write_csv(config.out / "ablation.csv", ABLATION_COLUMNS, rows)
    return rows


def export_inference(model: HSIFN, h_lr: HsiCube, r_ref: RgbImage, scale: int, out_dir,
                     variant: str = "full") -> HsiCube:
    """Super-resolve one input and write the cube, an RGB preview, flows and attention maps."""
    from ..io import FlowField, write_cube, write_flow
    from ..nn.model import hsifn_forward

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aux: dict = {}
    cube = hsifn_forward(h_lr, r_ref, model, scale, variant, aux)
    write_cube(HsiCube(np.clip(cube.data, 0, 1), cube.wavelengths), out / "output.hsic")
    export_ppm(srf_project(cube, model.srf), out / "output.ppm")
    if "flows" in aux:
        write_flow(FlowField(aux["flows"][0].data), out / "flow.flow")
    for i, weights in enumerate(aux.get("attention", [])):
        export_pgm(weights.data[0], out / f"attention_level{i}.pgm")
    return cube

