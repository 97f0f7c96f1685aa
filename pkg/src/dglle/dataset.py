"""Dataset loading and teacher-depth providers.

The distillation target is always the teacher's depth for the NORMAL-light
image; the depth network only ever sees the low-light input.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from . import arrayio
from .errors import ConfigError, ValidationError
from .synth import load_manifest


class SyntheticDepthTeacher:
    """Ground-truth depth shipped with the synthetic dataset."""

    def __init__(self, dataset_dir: str | Path):
        self.dataset_dir = Path(dataset_dir)

    def get_depth(self, record: dict) -> np.ndarray:
        return arrayio.load_array(self.dataset_dir / record["files"]["depth"])


class FileDepthTeacher:
    """Precomputed depth maps, one array container per sample id.

    Lets externally produced teacher outputs (e.g. an open-world depth
    model run offline on the normal-light images) plug into training.
    """

    def __init__(self, teacher_dir: str | Path):
        self.teacher_dir = Path(teacher_dir)
        if not self.teacher_dir.is_dir():
            raise ConfigError(f"teacher_dir {teacher_dir} does not exist")

    def get_depth(self, record: dict) -> np.ndarray:
        path = self.teacher_dir / f"{record['id']}.arr"
        if not path.exists():
            raise ValidationError(f"no teacher depth for sample {record['id']} at {path}")
        return arrayio.load_array(path)


def make_teacher(kind: str, dataset_dir, teacher_dir=None):
    if kind == "synthetic":
        return SyntheticDepthTeacher(dataset_dir)
    if kind == "files":
        return FileDepthTeacher(teacher_dir)
    raise ConfigError(f"unknown teacher provider {kind!r}")


class SceneDataset:
    """One split fully materialised as stacked float32 tensors."""

    def __init__(self, dataset_dir: str | Path, split: str, teacher=None):
        dataset_dir = Path(dataset_dir)
        records = [r for r in load_manifest(dataset_dir) if r["split"] == split]
        teacher = teacher or SyntheticDepthTeacher(dataset_dir)
        self.ids = [r["id"] for r in records]
        lows, normals, depths = [], [], []
        for r in records:
            lows.append(arrayio.load_array(dataset_dir / r["files"]["low"]))
            normals.append(arrayio.load_array(dataset_dir / r["files"]["normal"]))
            depths.append(teacher.get_depth(r))
        self.low = torch.from_numpy(np.stack(lows)) if lows else torch.zeros(0, 3, 1, 1)
        self.normal = torch.from_numpy(np.stack(normals)) if normals else torch.zeros(0, 3, 1, 1)
        self.depth = torch.from_numpy(np.stack(depths)) if depths else torch.zeros(0, 1, 1, 1)

    def __len__(self) -> int:
        return self.low.shape[0]
