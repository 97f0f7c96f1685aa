"""Enhancement network with per-level depth-guided fusion.

A small U-shaped baseline: per-level residual blocks, stride-2 downsampling,
skip connections, and a global residual head. Fusion blocks sit after each
encoder level's blocks ("full" and its gate ablations) or after each decoder
stage ("decoder" ablation, keyed to the depth net's decoder taps). Mode
"none" is the untouched baseline.

Fusion modules are constructed after the backbone so the backbone's
initialisation draws the same RNG stream in every mode; under a fixed seed,
"none" and "full with zeroed fusion" are bit-identical networks.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .depth_net import DepthFeatures, ResBlock, check_divisible
from .errors import ConfigError, DimensionError
from .fusion import Hdgffm

FUSION_MODES = ("full", "decoder_fusion", "no_correlation", "additive", "none")

#: modes whose fusion blocks sit at the encoder levels
_ENCODER_MODES = ("full", "no_correlation", "additive")


def _fusion_variant(mode: str) -> str:
    return {"full": "full", "decoder_fusion": "full",
            "no_correlation": "no_correlation", "additive": "additive"}[mode]


class Enhancer(nn.Module):
    def __init__(
        self,
        widths: tuple[int, ...] = (16, 32, 64),
        depth_widths: tuple[int, ...] = (8, 16, 32),
        mode: str = "full",
        blocks_per_level: int = 2,
        tau: float | None = None,
        image_size: tuple[int, int] | None = None,
    ):
        super().__init__()
        if mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {mode!r}")
        if len(depth_widths) != len(widths):
            raise ConfigError(
                f"depth pyramid has {len(depth_widths)} levels, enhancer has {len(widths)}"
            )
        if image_size is not None:
            check_divisible(image_size, len(widths))
        self.mode = mode
        self.widths = tuple(widths)
        self.depth_widths = tuple(depth_widths)
        L = len(widths)

        self.in_conv = nn.Conv2d(3, widths[0], 3, padding=1)
        self.enc_blocks = nn.ModuleList(
            nn.Sequential(*[ResBlock(widths[l]) for _ in range(blocks_per_level)])
            for l in range(L)
        )
        self.downs = nn.ModuleList(
            nn.Conv2d(widths[l], widths[l + 1], 3, stride=2, padding=1)
            for l in range(L - 1)
        )
        self.ups = nn.ModuleList(
            nn.Conv2d(widths[l + 1], widths[l], 1) for l in range(L - 1)
        )
        self.dec_fuse = nn.ModuleList(
            nn.Conv2d(2 * widths[l], widths[l], 3, padding=1) for l in range(L - 1)
        )
        self.dec_blocks = nn.ModuleList(
            nn.Sequential(*[ResBlock(widths[l]) for _ in range(blocks_per_level)])
            for l in range(L - 1)
        )
        self.head = nn.Conv2d(widths[0], 3, 3, padding=1)

        # fusion last: backbone RNG consumption is mode-independent
        if mode in _ENCODER_MODES:
            self.fusion = nn.ModuleList(
                Hdgffm(widths[l], depth_widths[l], _fusion_variant(mode), tau=tau)
                for l in range(L)
            )
        elif mode == "decoder_fusion":
            self.fusion = nn.ModuleList(
                Hdgffm(widths[l], depth_widths[l], "full", tau=tau)
                for l in range(L - 1)
            )
        else:
            self.fusion = nn.ModuleList()

    def _check_pyramid(self, skips_shape, depth_feats: DepthFeatures) -> None:
        taps = depth_feats.encoder if self.mode in _ENCODER_MODES else depth_feats.decoder
        for l, want in enumerate(skips_shape[: len(taps)]):
            got = tuple(taps[l].shape[2:])
            if got != want:
                raise DimensionError(
                    f"depth pyramid level {l} spatial dims {got} do not match "
                    f"enhancer level {l} dims {want}"
                )

    def forward(self, low_light: Tensor, depth_feats: DepthFeatures | None = None) -> Tensor:
        if low_light.ndim != 4 or low_light.shape[1] != 3:
            raise DimensionError(
                f"expected (N, 3, H, W) input, got {tuple(low_light.shape)}"
            )
        L = len(self.widths)
        if self.mode != "none":
            if depth_feats is None:
                raise ConfigError(f"mode {self.mode!r} requires depth features")
            h, w = low_light.shape[2:]
            self._check_pyramid([(h // 2 ** l, w // 2 ** l) for l in range(L)], depth_feats)

        x = F.silu(self.in_conv(low_light))
        skips = []
        for l in range(L):
            x = self.enc_blocks[l](x)
            if self.mode in _ENCODER_MODES:
                x = self.fusion[l](x, depth_feats.encoder[l])
            skips.append(x)
            if l < L - 1:
                x = F.silu(self.downs[l](x))
        for l in range(L - 2, -1, -1):
            x = self.ups[l](F.interpolate(x, scale_factor=2, mode="nearest"))
            x = F.silu(self.dec_fuse[l](torch.cat([x, skips[l]], dim=1)))
            x = self.dec_blocks[l](x)
            if self.mode == "decoder_fusion":
                x = self.fusion[l](x, depth_feats.decoder[l])
        return low_light + self.head(x)

    @torch.no_grad()
    def zero_fusion_(self) -> "Enhancer":
        for blk in self.fusion:
            blk.zero_fusion_()
        return self


def enhance_forward(model: Enhancer, low_light: Tensor,
                    depth_feats: DepthFeatures | None) -> Tensor:
    return model(low_light, depth_feats)


def restoration_loss(pred: Tensor, target: Tensor, eps: float = 1e-3) -> Tensor:
    """Charbonnier loss: mean(sqrt((pred-target)^2 + eps^2))."""
    if pred.shape != target.shape:
        raise DimensionError(
            f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}"
        )
    diff = pred - target
    return torch.sqrt(diff * diff + eps * eps).mean()


def fusion_param_count(c: int, c_d: int, mode: str) -> int:
    """Per-block fusion parameter count (gate absent in additive mode)."""
    n = 5 * c * c          # q, k, v, depth k, depth v
    n += 2 * c * c + 2 * c * c  # ffn in/out
    n += c * c_d           # depth embedding
    if mode != "additive":
        n += 2 * c * c + c  # gate weight + bias
    return n


def expected_enhancer_param_count(
    widths=(16, 32, 64), depth_widths=(8, 16, 32), mode="full", blocks_per_level=2
) -> int:
    """Closed-form total parameter count per mode."""
    w = list(widths)
    L = len(w)
    n = 3 * w[0] * 9 + w[0]
    n += sum(blocks_per_level * 2 * (9 * wl * wl + wl) for wl in w)          # encoder
    n += sum(9 * w[l] * w[l + 1] + w[l + 1] for l in range(L - 1))           # downs
    n += sum(w[l + 1] * w[l] + w[l] for l in range(L - 1))                   # ups
    n += sum(9 * 2 * w[l] * w[l] + w[l] for l in range(L - 1))               # dec fuse
    n += sum(blocks_per_level * 2 * (9 * w[l] * w[l] + w[l]) for l in range(L - 1))
    n += 9 * w[0] * 3 + 3                                                    # head
    if mode in _ENCODER_MODES:
        n += sum(fusion_param_count(w[l], depth_widths[l], mode) for l in range(L))
    elif mode == "decoder_fusion":
        n += sum(fusion_param_count(w[l], depth_widths[l], "full") for l in range(L - 1))
    return n
