"""Run configuration: dataclasses, YAML loading, flag overrides, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .synth import SynthConfig


@dataclass
class OptimConfig:
    kind: str = "adam"
    lr: float = 1e-3
    schedule: str = "cosine"  # "cosine" or "constant"


@dataclass
class TrainConfig:
    dataset_dir: str = "data"
    mode: str = "full"
    lam: float = 0.1                 # depth-loss weight
    tau: float | None = None         # None = per-level (H*W)**-0.5
    widths: tuple = (4, 8, 16)
    depth_base_width: int = 4
    blocks_per_level: int = 1
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    teacher: str = "synthetic"       # "synthetic" | "files"
    teacher_dir: str | None = None
    zero_init_fusion: bool = False

    def validate(self) -> "TrainConfig":
        from .enhancer import FUSION_MODES

        if self.mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.mode!r}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.teacher not in ("synthetic", "files"):
            raise ConfigError(f"unknown teacher provider {self.teacher!r}")
        if self.teacher == "files" and not self.teacher_dir:
            raise ConfigError("teacher 'files' requires teacher_dir")
        return self


def _build(cls, data: dict, path: str):
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {path + key!r}")
    kwargs = {}
    for key, val in data.items():
        f = known[key]
        if dataclasses.is_dataclass(f.type if isinstance(f.type, type) else None):
            kwargs[key] = _build(f.type, val, path + key + ".")
        elif key == "optimizer":
            kwargs[key] = _build(OptimConfig, val, path + key + ".")
        elif isinstance(val, list):
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = val
    return cls(**kwargs)


def load_config_file(path: str | Path) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw


def synth_config_from(raw: dict) -> SynthConfig:
    return _build(SynthConfig, raw.get("synth", {}), "synth.").validate()


def train_config_from(raw: dict, overrides: dict | None = None) -> TrainConfig:
    data = dict(raw.get("train", {}))
    for key, val in (overrides or {}).items():
        if val is not None:
            data[key] = val
    return _build(TrainConfig, data, "train.").validate()


def to_plain(obj) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(obj)))


def config_hash(obj) -> str:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
