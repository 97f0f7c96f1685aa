"""Lightweight pyramidal depth network.

A small U-shaped net whose encoder levels are shape-aligned with the
enhancer's encoder pyramid: level l has width base*2^l at resolution
H/2^l. The decoder emits a full-resolution 1-channel depth score used for
distillation against the teacher depth; decoder features are tapped only
for the decoder-side fusion ablation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .errors import ConfigError, DimensionError


class ResBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, x):
        h = F.silu(self.conv1(x))
        return x + self.conv2(h)


def check_divisible(image_size: tuple[int, int], levels: int) -> None:
    div = 2 ** (levels - 1)
    for name, s in zip(("height", "width"), image_size):
        if s % div != 0:
            raise ConfigError(
                f"{name} {s} not divisible by 2^(levels-1)={div}"
            )


@dataclass
class DepthFeatures:
    """Per-level encoder taps, decoder taps, and the decoded depth map.

    encoder[l] has shape (N, base*2^l, H/2^l, W/2^l); decoder[l] (for
    l < levels-1) sits at the same resolution as encoder[l].
    """

    encoder: list[Tensor] = field(default_factory=list)
    decoder: list[Tensor] = field(default_factory=list)
    depth: Tensor | None = None


class DepthNet(nn.Module):
    def __init__(self, levels: int = 3, base_width: int = 8,
                 image_size: tuple[int, int] | None = None):
        super().__init__()
        self.levels = levels
        self.widths = [base_width * 2 ** l for l in range(levels)]
        if image_size is not None:
            check_divisible(image_size, levels)
        w = self.widths
        self.in_conv = nn.Conv2d(3, w[0], 3, padding=1)
        self.enc_blocks = nn.ModuleList([ResBlock(w[l]) for l in range(levels)])
        self.downs = nn.ModuleList(
            [nn.Conv2d(w[l], w[l + 1], 3, stride=2, padding=1) for l in range(levels - 1)]
        )
        self.ups = nn.ModuleList(
            [nn.Conv2d(w[l + 1], w[l], 1) for l in range(levels - 1)]
        )
        self.dec_fuse = nn.ModuleList(
            [nn.Conv2d(2 * w[l], w[l], 3, padding=1) for l in range(levels - 1)]
        )
        self.head = nn.Conv2d(w[0], 1, 3, padding=1)

    def forward(self, low_light: Tensor) -> DepthFeatures:
        if low_light.ndim != 4 or low_light.shape[1] != 3:
            raise DimensionError(
                f"expected (N, 3, H, W) input, got {tuple(low_light.shape)}"
            )
        feats = DepthFeatures()
        x = F.silu(self.in_conv(low_light))
        for l in range(self.levels):
            x = self.enc_blocks[l](x)
            feats.encoder.append(x)
            if l < self.levels - 1:
                x = F.silu(self.downs[l](x))
        dec = [None] * (self.levels - 1)
        for l in range(self.levels - 2, -1, -1):
            x = self.ups[l](F.interpolate(x, scale_factor=2, mode="nearest"))
            x = F.silu(self.dec_fuse[l](torch.cat([x, feats.encoder[l]], dim=1)))
            dec[l] = x
        feats.decoder = dec
        feats.depth = self.head(x)
        return feats


def depth_forward(model: DepthNet, low_light: Tensor) -> tuple[list[Tensor], Tensor]:
    """Returns (encoder pyramid, decoded depth prediction)."""
    feats = model(low_light)
    return feats.encoder, feats.depth


def depth_loss(pred: Tensor, teacher: Tensor) -> Tensor:
    """Mean squared error between predicted and teacher depth."""
    if pred.shape != teacher.shape:
        raise DimensionError(
            f"shape mismatch: pred {tuple(pred.shape)} vs teacher {tuple(teacher.shape)}"
        )
    diff = pred - teacher
    return (diff * diff).mean()


def expected_depth_param_count(levels: int = 3, base_width: int = 8) -> int:
    """Closed-form parameter count; guards silent wiring changes."""
    w = [base_width * 2 ** l for l in range(levels)]
    n = 3 * w[0] * 9 + w[0]                                  # in_conv
    n += sum(2 * (9 * wl * wl + wl) for wl in w)             # encoder res blocks
    n += sum(9 * w[l] * w[l + 1] + w[l + 1] for l in range(levels - 1))
    n += sum(w[l + 1] * w[l] + w[l] for l in range(levels - 1))      # 1x1 ups
    n += sum(9 * 2 * w[l] * w[l] + w[l] for l in range(levels - 1))  # dec fuse
    n += 9 * w[0] * 1 + 1                                    # head
    return n
