"""Train the toy-width network on a few synthetic scenes and compare with bicubic.

    python3 demos/train_toy.py [steps] [output_dir]

A few hundred steps take a few minutes on one CPU core.  The report lists
PSNR / SSIM / SAM for the network and for plain bicubic upsampling.
"""
import sys
from pathlib import Path

from hsifusion.pipeline import build_dataset, evaluate, toy_config, train


def main(steps: int, out: Path) -> None:
    cfg = toy_config(steps=steps, n_train=6, n_test=2, flow_pretrain=True, flow_pretrain_steps=300,
                     output_dir=str(out))
    data = build_dataset(cfg)
    result = train(cfg, data, log=print)
    rows = evaluate(result.model, data.test, out / "eval")
    print(f"{'item':>10} {'psnr':>8} {'ssim':>7} {'sam':>7} | {'bicubic psnr':>12} {'ssim':>7} {'sam':>7}")
    for r in rows:
        print(f"{r[0]:>10} {r[1]:8.3f} {r[2]:7.4f} {r[3]:7.4f} | {r[4]:12.3f} {r[5]:7.4f} {r[6]:7.4f}")
    print(f"checkpoint: {out / 'model.hsfn'}; visuals: {out / 'eval' / 'visuals'}")


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    main(n, Path(sys.argv[2]) if len(sys.argv) > 2 else Path("demo_output/train_toy"))
