"""Experiment configuration: a flat ``key = value`` text format with ``#`` comments."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..nn.model import VARIANTS, NetConfig

SCALES = (4, 8, 16)


class ConfigError(ValueError):
    kind = "config"


@dataclass
class ExperimentConfig:
    # optimisation
    scale: int = 4
    epochs: int = 10
    steps: int = 0  # > 0 overrides epochs with an exact step budget
    lr: float = 1e-3
    lr_decay_steps: int = 0  # > 0: cosine decay of lr to zero over this many steps
    weight_decay: float = 5e-5
    seed: int = 0
    crop: int = 64  # square training crop, 0 = whole image
    hr_pretrain_epochs: int = 0
    flow_pretrain: bool = False
    flow_pretrain_steps: int = 1500
    flow_pretrain_crop: int = 64
    variant: str = "full"
    # dataset
    dataset_dir: str = ""  # empty: synthetic scenes
    bands: int = 8
    height: int = 128
    width: int = 128
    n_train: int = 20
    n_test: int = 5
    max_disp: float = 6.0
    nonrigid: bool = True
    srf_csv: str = ""
    # network
    rgb_channels: int = 64
    hsi_channels: int = 16
    dec_channels: int = 16
    flow_channels: int = 16
    flow_hidden: int = 32
    att_flow_channels: int = 16
    att_reduce_channels: int = 16
    att_hidden: int = 16
    alpha_hsi: float = 1.0
    alpha_ref: float = 1.0
    # output
    output_dir: str = "runs/default"
    save_visuals: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if min(self.epochs, self.steps, self.hr_pretrain_epochs, self.lr_decay_steps) < 0:
            raise ConfigError("epochs, steps, hr_pretrain_epochs and lr_decay_steps must be >= 0")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("crop", "flow_pretrain_crop"):
            v = getattr(self, name)
            if v < 0 or v % 8:
                raise ConfigError(f"{name} must be 0 or a positive multiple of 8, got {v}")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("need at least one training and one test scene")
        if self.height % (8 * self.scale) and not self.dataset_dir:
            raise ConfigError(f"height {self.height} must be divisible by 8 * scale")
        if self.width % (8 * self.scale) and not self.dataset_dir:
            raise ConfigError(f"width {self.width} must be divisible by 8 * scale")
        if self.alpha_hsi <= 0 or self.alpha_ref <= 0:
            raise ConfigError("alpha_hsi and alpha_ref must be > 0")

    def net_config(self) -> NetConfig:
        names = {f.name for f in fields(NetConfig)}
        return NetConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def replace(self, **changes) -> "ExperimentConfig":
        d = asdict(self)
        d.update(changes)
        return ExperimentConfig(**d)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


def _coerce(name: str, kind, raw: str):
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from exc


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    values = {}
    types = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(ExperimentConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, types[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), **overrides)


TOY_WIDTHS = dict(rgb_channels=12, hsi_channels=8, dec_channels=8, flow_channels=8, flow_hidden=16,
                  att_flow_channels=4, att_reduce_channels=4, att_hidden=8)


def toy_config(**changes) -> ExperimentConfig:
    """Small-width preset that trains in minutes on one CPU core."""
    return ExperimentConfig(**{**TOY_WIDTHS, **changes})
