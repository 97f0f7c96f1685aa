"""Scalar-loop reference implementations of the fusion block.

Everything here is written with explicit Python loops over numpy float64
scalars: no matmul, no broadcasting, no softmax primitive. It is a deliberate,
independent second route used to verify the vectorized implementation, so it
must stay slow and obvious. Guarded to small instances (C*H*W <= 4096).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

MAX_ORACLE_ELEMS = 4096


def _guard(c: int, h: int, w: int) -> None:
    if c * h * w > MAX_ORACLE_ELEMS:
        raise ValidationError(
            f"oracle limited to C*H*W <= {MAX_ORACLE_ELEMS}, got {c * h * w}"
        )


def params_to_numpy(params) -> dict:
    """Detach an HdgffmParams bundle into plain float64 numpy arrays."""
    out = {"tau": params.tau}
    for name, t in params.named().items():
        out[name] = np.asarray(t.detach().cpu().numpy(), dtype=np.float64)
    for opt in ("gate_w", "gate_b", "w_q_cross"):
        out.setdefault(opt, None)
    return out


def _project_loop(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(N, C, H, W) through a (C_out, C_in) channel matrix, scalar loops."""
    n, c, h, wid = x.shape
    cout = w.shape[0]
    out = np.zeros((n, cout, h, wid), dtype=np.float64)
    for b in range(n):
        for o in range(cout):
            for i in range(h):
                for j in range(wid):
                    acc = 0.0
                    for ci in range(c):
                        acc += w[o, ci] * x[b, ci, i, j]
                    out[b, o, i, j] = acc
    return out


def attention_map_oracle(query: np.ndarray, key: np.ndarray, w_query: np.ndarray,
                         w_key: np.ndarray, tau: float | None) -> np.ndarray:
    n, _, h, wid = query.shape
    _guard(max(query.shape[1], key.shape[1]), h, wid)
    t = (h * wid) ** -0.5 if tau is None else tau
    q = _project_loop(query, w_query)
    k = _project_loop(key, w_key)
    cq, ck = q.shape[1], k.shape[1]
    attn = np.zeros((n, cq, ck), dtype=np.float64)
    for b in range(n):
        for r in range(cq):
            logits = []
            for s in range(ck):
                acc = 0.0
                for i in range(h):
                    for j in range(wid):
                        acc += q[b, r, i, j] * k[b, s, i, j]
                logits.append(acc * t)
            m = max(logits)
            exps = [math.exp(v - m) for v in logits]
            z = sum(exps)
            for s in range(ck):
                attn[b, r, s] = exps[s] / z
    return attn


def _apply_attention_loop(attn: np.ndarray, values: np.ndarray) -> np.ndarray:
    n, cq, ck = attn.shape
    _, _, h, wid = values.shape
    out = np.zeros((n, cq, h, wid), dtype=np.float64)
    for b in range(n):
        for r in range(cq):
            for i in range(h):
                for j in range(wid):
                    acc = 0.0
                    for s in range(ck):
                        acc += attn[b, r, s] * values[b, s, i, j]
                    out[b, r, i, j] = acc
    return out


def self_attention_oracle(feat: np.ndarray, p: dict) -> np.ndarray:
    attn = attention_map_oracle(feat, feat, p["w_q"], p["w_k"], p["tau"])
    return _apply_attention_loop(attn, _project_loop(feat, p["w_v"]))


def cross_attention_oracle(img: np.ndarray, depth_emb: np.ndarray, p: dict) -> np.ndarray:
    wq = p["w_q"] if p.get("w_q_cross") is None else p["w_q_cross"]
    attn = attention_map_oracle(img, depth_emb, wq, p["w_k_depth"], p["tau"])
    return _apply_attention_loop(attn, _project_loop(depth_emb, p["w_v_depth"]))


def correlation_gate_oracle(self_out: np.ndarray, cross_out: np.ndarray, p: dict,
                            apply_sigmoid: bool = True) -> np.ndarray:
    n, c, h, wid = self_out.shape
    out = np.zeros_like(self_out)
    for b in range(n):
        for o in range(c):
            for i in range(h):
                for j in range(wid):
                    acc = p["gate_b"][o]
                    for ci in range(c):
                        acc += p["gate_w"][o, ci] * self_out[b, ci, i, j]
                        acc += p["gate_w"][o, c + ci] * cross_out[b, ci, i, j]
                    if apply_sigmoid:
                        acc = 1.0 / (1.0 + math.exp(-acc))
                    out[b, o, i, j] = acc
    return out


def _ffn_oracle(x: np.ndarray, p: dict) -> np.ndarray:
    hidden = _project_loop(x, p["ffn_w1"])
    n, ch, h, wid = hidden.shape
    for b in range(n):
        for o in range(ch):
            for i in range(h):
                for j in range(wid):
                    v = hidden[b, o, i, j]
                    hidden[b, o, i, j] = v / (1.0 + math.exp(-v))
    return _project_loop(hidden, p["ffn_w2"])


def hdgffm_oracle(img_feat: np.ndarray, depth_feat_raw: np.ndarray, p: dict,
                  variant: str = "full") -> np.ndarray:
    """Loop twin of the vectorized fusion block forward."""
    n, c, h, wid = img_feat.shape
    _guard(c, h, wid)
    depth_emb = _project_loop(depth_feat_raw, p["embed"])
    self_out = self_attention_oracle(img_feat, p)
    cross_out = cross_attention_oracle(img_feat, depth_emb, p)
    fused = np.zeros_like(img_feat)
    if variant == "additive":
        for idx in np.ndindex(*img_feat.shape):
            fused[idx] = cross_out[idx] + self_out[idx] + img_feat[idx]
    else:
        gate = correlation_gate_oracle(self_out, cross_out, p,
                                       apply_sigmoid=(variant == "full"))
        for idx in np.ndindex(*img_feat.shape):
            fused[idx] = gate[idx] * cross_out[idx] + self_out[idx] + img_feat[idx]
    ffn_out = _ffn_oracle(fused, p)
    out = np.zeros_like(img_feat)
    for idx in np.ndindex(*img_feat.shape):
        out[idx] = ffn_out[idx] + img_feat[idx]
    return out
