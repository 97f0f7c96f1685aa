"""Depth-guided feature fusion block (channel attention + correlation gate).

All attention here is channel-wise ("transposed") attention: the similarity
matrix is C x C over channel vectors flattened across space, so cost is
independent of token count. The block combines

  1. self attention on the image features,
  2. cross attention with query from the image features and key/value from
     the embedded depth features,
  3. a sigmoid correlation gate over the concatenated attention outputs,
  4. gated residual fusion and a feed-forward output with a second residual.

Functional entry points operate on explicit parameter bundles so the loop
oracle and the finite-difference checks can drive the exact same code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
from torch import Tensor

from .errors import DimensionError, NonFiniteError, ValidationError

VARIANTS = ("full", "no_correlation", "additive")


@dataclass
class HdgffmParams:
    """All learnable weights of one fusion block.

    Projections are channel matrices (a 1x1 convolution is a matrix on the
    channel axis): ``w_*`` are (C, C), ``gate_w`` is (C, 2C), the feed-forward
    pair expands to 2C and back, ``embed`` maps raw depth channels to C.
    Only the gate carries a bias, so a zero-initialised gate is exactly 0.5.
    ``tau`` is the attention temperature; None means (H*W)**-0.5 at call time.
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_k_depth: Tensor
    w_v_depth: Tensor
    gate_w: Optional[Tensor]
    gate_b: Optional[Tensor]
    ffn_w1: Tensor
    ffn_w2: Tensor
    embed: Tensor
    tau: Optional[float] = None
    w_q_cross: Optional[Tensor] = None  # unshared-query variant only

    def named(self) -> dict[str, Tensor]:
        out = {}
        for name in ("w_q", "w_k", "w_v", "w_k_depth", "w_v_depth", "gate_w",
                     "gate_b", "ffn_w1", "ffn_w2", "embed", "w_q_cross"):
            t = getattr(self, name)
            if t is not None:
                out[name] = t
        return out


def _require_finite(name: str, x: Tensor) -> None:
    if not torch.isfinite(x).all():
        raise ValidationError(f"{name} contains non-finite entries")


def _require_4d(name: str, x: Tensor) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{name} must be (N, C, H, W), got {x.ndim} axes")


def _check_spatial(a_name: str, a: Tensor, b_name: str, b: Tensor) -> None:
    for axis, label in ((0, "batch"), (2, "height"), (3, "width")):
        if a.shape[axis] != b.shape[axis]:
            raise DimensionError(
                f"{label} axis mismatch: {a_name} has {a.shape[axis]}, "
                f"{b_name} has {b.shape[axis]}"
            )


def _project(x: Tensor, w: Tensor) -> Tensor:
    """Apply a channel matrix to (N, C, H, W): returns (N, C_out, H*W)."""
    n, c, h, wid = x.shape
    if w.shape[1] != c:
        raise DimensionError(
            f"channel axis mismatch: projection expects {w.shape[1]} channels, "
            f"feature has {c}"
        )
    return torch.matmul(w, x.reshape(n, c, h * wid))


def resolve_tau(tau: Optional[float], h: int, w: int) -> float:
    """Default temperature keeps Gram logits O(1) across pyramid levels."""
    if tau is None:
        return float((h * w) ** -0.5)
    if tau <= 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    return float(tau)


def channel_attention_map(
    query_feat: Tensor,
    key_feat: Tensor,
    w_query: Tensor,
    w_key: Tensor,
    tau: Optional[float],
    validate: bool = True,
) -> Tensor:
    """Row-stochastic (N, C_q, C_k) channel attention matrix.

    Softmax is taken over the key-channel axis with row-max subtraction.
    """
    _require_4d("query_feat", query_feat)
    _require_4d("key_feat", key_feat)
    if validate:
        _require_finite("query_feat", query_feat)
        _require_finite("key_feat", key_feat)
    _check_spatial("query_feat", query_feat, "key_feat", key_feat)
    t = resolve_tau(tau, query_feat.shape[2], query_feat.shape[3])
    q = _project(query_feat, w_query)
    k = _project(key_feat, w_key)
    logits = torch.matmul(q, k.transpose(1, 2)) * t
    logits = logits - logits.amax(dim=-1, keepdim=True)
    return torch.softmax(logits, dim=-1)


def self_attention(feat: Tensor, params: HdgffmParams, validate: bool = True) -> Tensor:
    attn = channel_attention_map(feat, feat, params.w_q, params.w_k, params.tau, validate)
    v = _project(feat, params.w_v)
    return torch.matmul(attn, v).reshape(feat.shape)


def cross_attention(img_feat: Tensor, depth_feat_embedded: Tensor, params: HdgffmParams,
                    validate: bool = True) -> Tensor:
    """Query from image features, key/value from embedded depth features."""
    if img_feat.shape[1] != depth_feat_embedded.shape[1]:
        raise DimensionError(
            f"channel axis mismatch: image features have {img_feat.shape[1]} "
            f"channels, embedded depth features have {depth_feat_embedded.shape[1]}"
        )
    wq = params.w_q if params.w_q_cross is None else params.w_q_cross
    attn = channel_attention_map(img_feat, depth_feat_embedded, wq, params.w_k_depth,
                                 params.tau, validate)
    v = _project(depth_feat_embedded, params.w_v_depth)
    return torch.matmul(attn, v).reshape(img_feat.shape)


def correlation_gate(
    self_out: Tensor,
    cross_out: Tensor,
    params: HdgffmParams,
    *,
    apply_sigmoid: bool = True,
) -> Tensor:
    """Per-pixel, per-channel fusion weight from concatenated attention outputs."""
    _require_4d("self_out", self_out)
    _require_4d("cross_out", cross_out)
    if self_out.shape != cross_out.shape:
        raise DimensionError(
            f"shape mismatch: self_out {tuple(self_out.shape)} vs "
            f"cross_out {tuple(cross_out.shape)}"
        )
    if params.gate_w is None:
        raise ValidationError("gate parameters absent (additive variant has no gate)")
    cat = torch.cat([self_out, cross_out], dim=1)
    z = _project(cat, params.gate_w).reshape(self_out.shape)
    z = z + params.gate_b.reshape(1, -1, 1, 1)
    return torch.sigmoid(z) if apply_sigmoid else z


def _ffn(x: Tensor, params: HdgffmParams) -> Tensor:
    n, c, h, w = x.shape
    hidden = _project(x, params.ffn_w1)
    hidden = hidden * torch.sigmoid(hidden)  # sigmoid-weighted linear unit
    return torch.matmul(params.ffn_w2, hidden).reshape(n, c, h, w)


def hdgffm_forward(
    img_feat: Tensor,
    depth_feat_raw: Tensor,
    params: HdgffmParams,
    variant: str = "full",
    validate: bool = True,
) -> Tensor:
    """Full fusion block: embed, attend, gate, fuse, feed-forward.

    ``variant`` selects the ablation wiring: "no_correlation" drops the
    sigmoid from the gate, "additive" drops the gate entirely (fixed weight 1).
    ``validate=False`` skips the per-stage finite scans (training hot path;
    divergence is still caught by the loss check in the training loop).
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown fusion variant {variant!r}")
    _require_4d("img_feat", img_feat)
    _require_4d("depth_feat_raw", depth_feat_raw)
    _check_spatial("img_feat", img_feat, "depth_feat_raw", depth_feat_raw)
    if validate:
        _require_finite("img_feat", img_feat)
        _require_finite("depth_feat_raw", depth_feat_raw)

    depth_emb = _project(depth_feat_raw, params.embed).reshape(
        img_feat.shape[0], params.embed.shape[0], *img_feat.shape[2:]
    )
    stages = [("depth_embedding", depth_emb)]
    self_out = self_attention(img_feat, params, validate)
    stages.append(("self_attention", self_out))
    cross_out = cross_attention(img_feat, depth_emb, params, validate)
    stages.append(("cross_attention", cross_out))

    if variant == "additive":
        fused = cross_out + self_out + img_feat
    else:
        gate = correlation_gate(self_out, cross_out, params,
                                apply_sigmoid=(variant == "full"))
        stages.append(("correlation_gate", gate))
        fused = gate * cross_out + self_out + img_feat
    stages.append(("residual_fusion", fused))
    out = _ffn(fused, params) + img_feat
    stages.append(("feed_forward", out))

    if validate:
        for name, t in stages:
            if not torch.isfinite(t).all():
                raise NonFiniteError(f"non-finite values produced at stage {name!r}")
    return out


class Hdgffm(nn.Module):
    """Module wrapper holding one fusion block's parameters.

    channels: image-feature width C; depth_channels: raw depth-feature width.
    The feed-forward output projection and the gate start at zero, so a fresh
    block is exactly the identity on the image features.
    """

    def __init__(
        self,
        channels: int,
        depth_channels: int,
        variant: str = "full",
        tau: Optional[float] = None,
        share_query: bool = True,
    ):
        super().__init__()
        if variant not in VARIANTS:
            raise ValidationError(f"unknown fusion variant {variant!r}")
        self.channels = channels
        self.depth_channels = depth_channels
        self.variant = variant
        self.tau = tau
        c = channels

        def proj(cout, cin):
            w = torch.empty(cout, cin)
            nn.init.xavier_uniform_(w)
            return nn.Parameter(w)

        self.w_q = proj(c, c)
        self.w_k = proj(c, c)
        self.w_v = proj(c, c)
        self.w_k_depth = proj(c, c)
        self.w_v_depth = proj(c, c)
        self.w_q_cross = None if share_query else proj(c, c)
        if variant == "additive":
            self.gate_w = None
            self.gate_b = None
        else:
            self.gate_w = nn.Parameter(torch.zeros(c, 2 * c))
            self.gate_b = nn.Parameter(torch.zeros(c))
        self.ffn_w1 = proj(2 * c, c)
        self.ffn_w2 = nn.Parameter(torch.zeros(c, 2 * c))
        self.embed = proj(c, depth_channels)

    def bundle(self) -> HdgffmParams:
        return HdgffmParams(
            w_q=self.w_q, w_k=self.w_k, w_v=self.w_v,
            w_k_depth=self.w_k_depth, w_v_depth=self.w_v_depth,
            gate_w=self.gate_w, gate_b=self.gate_b,
            ffn_w1=self.ffn_w1, ffn_w2=self.ffn_w2,
            embed=self.embed, tau=self.tau, w_q_cross=self.w_q_cross,
        )

    #: per-stage finite scans are opt-in for module use (training hot path)
    validate = False

    def forward(self, img_feat: Tensor, depth_feat_raw: Tensor) -> Tensor:
        return hdgffm_forward(img_feat, depth_feat_raw, self.bundle(), self.variant,
                              validate=self.validate)

    @torch.no_grad()
    def zero_fusion_(self) -> "Hdgffm":
        """Zero every parameter; the block becomes the exact identity."""
        for p in self.parameters():
            p.zero_()
        return self


def zero_params(channels: int, depth_channels: int, *, dtype=torch.float64,
                tau: Optional[float] = None, with_gate: bool = True) -> HdgffmParams:
    c = channels
    z = lambda *s: torch.zeros(*s, dtype=dtype)
    return HdgffmParams(
        w_q=z(c, c), w_k=z(c, c), w_v=z(c, c),
        w_k_depth=z(c, c), w_v_depth=z(c, c),
        gate_w=z(c, 2 * c) if with_gate else None,
        gate_b=z(c) if with_gate else None,
        ffn_w1=z(2 * c, c), ffn_w2=z(c, 2 * c),
        embed=z(c, depth_channels), tau=tau,
    )


def random_params(channels: int, depth_channels: int, seed: int, *,
                  dtype=torch.float64, tau: Optional[float] = None,
                  scale: float = 0.5, with_gate: bool = True) -> HdgffmParams:
    """Seeded dense random parameters for oracle and gradient tests."""
    g = torch.Generator().manual_seed(seed)
    c = channels
    r = lambda *s: (torch.rand(*s, generator=g, dtype=dtype) - 0.5) * 2 * scale
    return HdgffmParams(
        w_q=r(c, c), w_k=r(c, c), w_v=r(c, c),
        w_k_depth=r(c, c), w_v_depth=r(c, c),
        gate_w=r(c, 2 * c) if with_gate else None,
        gate_b=r(c) if with_gate else None,
        ffn_w1=r(2 * c, c), ffn_w2=r(c, 2 * c),
        embed=r(c, depth_channels), tau=tau,
    )
