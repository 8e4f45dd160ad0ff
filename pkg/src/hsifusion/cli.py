"""Command-line interface: ``hsifusion <subcommand> ...``.

Relative output paths are resolved under ``$HSIFUSION_OUTPUT_ROOT`` when it is
set.  Failures print one line to stderr::

    error command=<name> kind=<kind> message=<json string>

and exit with status 1 (status 2 for usage errors).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

OUTPUT_ROOT_ENV = "HSIFUSION_OUTPUT_ROOT"


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def output_path(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _load_image(path: str):
    """HSIC cube or binary PPM, chosen by magic bytes."""
    from .io import read_cube, read_ppm

    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"HSIC":
        return read_cube(path)
    if magic[:2] == b"P6":
        return read_ppm(path)
    raise CliError("bad-magic", f"{path}: neither an HSIC cube nor a P6 image")


# -- subcommands -------------------------------------------------------------------

def cmd_simulate(args) -> None:
    from .degrade import Srf, srf_project
    from .flowviz import flow_to_rgb
    from .io import export_ppm
    from .synth import synth_scene

    pair = synth_scene(args.seed, bands=args.bands, height=args.size, width=args.size,
                       max_disp=args.max_disp, nonrigid=not args.affine_only)
    out = output_path(args.out)
    pair.save(out)
    srf = Srf.default(args.bands)
    export_ppm(srf_project(pair.hr_cube, srf), out / "hr.ppm")
    export_ppm(srf_project(pair.ref_cube, srf), out / "ref.ppm")
    export_ppm(flow_to_rgb(pair.gt_flow), out / "gt_flow.ppm")
    print(out)


def cmd_degrade(args) -> None:
    from .degrade import degrade
    from .io import read_cube, write_cube

    cube = read_cube(args.input)
    out = output_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_cube(degrade(cube, args.scale, args.kernel_size, args.sigma), out)
    print(out)


def cmd_register(args) -> None:
    from .io import HsiCube, RgbImage, export_ppm, write_cube
    from .register import register_images, warp_affine

    src = _load_image(args.source)
    dst = _load_image(args.target)
    affine, inliers = register_images(src, dst, iters=args.iters, tol_px=args.tol, seed=args.seed)
    print(affine.to_csv_row())
    if args.out:
        out = output_path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "affine.csv").write_text(affine.to_csv_row() + "\n")
        # resample the source onto the target grid: target(q) = source(A^-1 q)
        warped = warp_affine(src, affine, out_shape=dst.data.shape[1:])
        if isinstance(warped, HsiCube):
            write_cube(warped, out / "warped.hsic")
        elif isinstance(warped, RgbImage):
            export_ppm(warped, out / "warped.ppm")
        _log(f"{int(np.sum(inliers))} inliers")


def _config(args):
    from .pipeline import ExperimentConfig, load_config

    overrides = {"seed": args.seed}
    if getattr(args, "out", None):
        overrides["output_dir"] = str(output_path(args.out))
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    if not getattr(args, "out", None):
        cfg = cfg.replace(output_dir=str(output_path(cfg.output_dir)))
    return cfg


def cmd_train(args) -> None:
    from .pipeline import build_dataset, train

    cfg = _config(args)
    data = build_dataset(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    data.write_manifest(cfg.out / "manifest.json")
    result = train(cfg, data, log=_log)
    print(cfg.out / "model.hsfn")
    _log(f"final loss {result.losses[-1][4]:.6f}" if result.losses else "no steps run")


def cmd_evaluate(args) -> None:
    from .checkpoint import load_checkpoint
    from .pipeline import build_dataset, evaluate

    cfg = _config(args)
    data = build_dataset(cfg)
    model = load_checkpoint(args.checkpoint)
    rows = evaluate(model, data.test, cfg.out, args.variant or cfg.variant, cfg.save_visuals)
    mean = rows[-1]
    print(f"psnr={mean[1]:.4f} ssim={mean[2]:.4f} sam={mean[3]:.5f} "
          f"bicubic_psnr={mean[4]:.4f} bicubic_ssim={mean[5]:.4f} bicubic_sam={mean[6]:.5f}")


def cmd_ablate(args) -> None:
    from .nn.model import VARIANTS
    from .pipeline import ablate, build_dataset

    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    bad = [v for v in variants if v not in VARIANTS]
    if bad or not variants:
        raise CliError("config", f"unknown variants {bad}; choose from {list(VARIANTS)}")
    cfg = _config(args)
    data = build_dataset(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    data.write_manifest(cfg.out / "manifest.json")
    for row in ablate(cfg, data, variants, log=_log):
        print(",".join([row[0]] + [repr(float(v)) for v in row[1:]]))


def cmd_infer(args) -> None:
    from .checkpoint import load_checkpoint
    from .io import read_cube, read_ppm
    from .pipeline import export_inference

    model = load_checkpoint(args.checkpoint)
    h_lr = read_cube(args.lr)
    ref = read_ppm(args.ref) if not args.ref.endswith(".hsic") else None
    if ref is None:
        from .degrade import srf_project

        ref = srf_project(read_cube(args.ref), model.srf)
    out = output_path(args.out)
    export_inference(model, h_lr, ref, args.scale, out, args.variant)
    print(out / "output.hsic")


def cmd_metrics(args) -> None:
    from .io import read_cube
    from .metrics import psnr, sam, ssim

    a = read_cube(args.a)
    b = read_cube(args.b)
    if a.data.shape != b.data.shape:
        raise CliError("shape", f"cube shapes differ: {a.data.shape} vs {b.data.shape}")
    if args.header:
        print("psnr,ssim,sam")
    print(f"{psnr(a, b)!r},{ssim(a, b)!r},{sam(a, b)!r}")


def cmd_flow_viz(args) -> None:
    from .flowviz import flow_to_rgb
    from .io import export_ppm, read_flow

    flow = read_flow(args.flow)
    out = output_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_ppm(flow_to_rgb(flow, args.max_magnitude), out)
    print(out)


# -- parser ------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit(self.prog.split()[-1], "usage", message)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hsifusion", description="Reference-guided hyperspectral super-resolution.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, default=None if name in ("train", "evaluate", "ablate") else 0,
                        help="random seed")
        sp.set_defaults(func=fn)
        return sp

    sp = add("simulate", cmd_simulate, "generate a synthetic misaligned scene pair")
    sp.add_argument("--out", required=True)
    sp.add_argument("--bands", type=int, default=8)
    sp.add_argument("--size", type=int, default=128)
    sp.add_argument("--max-disp", type=float, default=6.0)
    sp.add_argument("--affine-only", action="store_true")

    sp = add("degrade", cmd_degrade, "blur and decimate an HSIC cube")
    sp.add_argument("input")
    sp.add_argument("--scale", type=int, choices=(4, 8, 16), required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--kernel-size", type=int, default=8)
    sp.add_argument("--sigma", type=float, default=3.0)

    sp = add("register", cmd_register, "estimate the affine map from SOURCE to TARGET")
    sp.add_argument("source")
    sp.add_argument("target")
    sp.add_argument("--iters", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=2.0)
    sp.add_argument("--out")

    for name, fn, text in (("train", cmd_train, "train a network"),
                           ("evaluate", cmd_evaluate, "evaluate a checkpoint on the test split"),
                           ("ablate", cmd_ablate, "train and compare ablation variants")):
        sp = add(name, fn, text)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        if name == "evaluate":
            sp.add_argument("--checkpoint", required=True)
            sp.add_argument("--variant")
        if name == "ablate":
            sp.add_argument("--variants", default="full,no_attention,no_align,sisr_only")

    sp = add("infer", cmd_infer, "super-resolve one low-resolution cube")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--lr", required=True, help="low-resolution HSIC cube")
    sp.add_argument("--ref", required=True, help="reference PPM (or HSIC, projected through the SRF)")
    sp.add_argument("--scale", type=int, choices=(4, 8, 16), required=True)
    sp.add_argument("--variant", default="full")
    sp.add_argument("--out", required=True)

    sp = add("metrics", cmd_metrics, "PSNR, SSIM and SAM between two cubes as one CSV row")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--header", action="store_true")

    sp = add("flow-viz", cmd_flow_viz, "render a FLOW file with the standard colour wheel")
    sp.add_argument("flow")
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-magnitude", type=float)
    return p


def _emit(command: str, kind: str, message: str) -> None:
    line = " ".join(str(message).split())
    print(f"error command={command} kind={kind} message={json.dumps(line)}", file=sys.stderr)


def _kind(exc: BaseException) -> str:
    kind = getattr(exc, "kind", None)
    if kind:
        return kind
    if isinstance(exc, FileNotFoundError):
        return "not-found"
    return {"ContractError": "contract", "NoModelError": "no-model",
            "NonFiniteGradient": "non-finite-gradient"}.get(type(exc).__name__, "invalid")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, OSError, RuntimeError, FloatingPointError, KeyError) as exc:
        _emit(args.command, _kind(exc), str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
