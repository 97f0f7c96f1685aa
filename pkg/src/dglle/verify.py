"""Numerical verification: oracle equivalence and finite-difference checks.

Two independent routes everywhere: the vectorized forward is compared
against the scalar-loop oracle, and analytic (autograd) gradients are
compared against central finite differences in float64.
"""

from __future__ import annotations

import time

import numpy as np
import torch

from . import oracle
from .config import TrainConfig
from .depth_net import depth_loss
from .enhancer import restoration_loss
from .fusion import hdgffm_forward, random_params
from .train import build_models, named_parameters

GRAD_EPS = 1e-5
GRAD_REL_TOL = 1e-4
ZERO_FLOOR = 1e-6  # below FD resolution: both routes agreeing on "zero gradient"


def random_instance(seed: int, *, dtype=torch.float64):
    """Seeded small fusion instance (C <= 8, H, W <= 5)."""
    g = torch.Generator().manual_seed(seed)
    c = int(torch.randint(1, 9, (1,), generator=g))
    cd = int(torch.randint(1, 9, (1,), generator=g))
    h = int(torch.randint(1, 6, (1,), generator=g))
    w = int(torch.randint(1, 6, (1,), generator=g))
    n = int(torch.randint(1, 3, (1,), generator=g))
    img = torch.randn(n, c, h, w, generator=g, dtype=dtype)
    depth = torch.randn(n, cd, h, w, generator=g, dtype=dtype)
    params = random_params(c, cd, seed + 10_000, dtype=dtype)
    return img, depth, params


def oracle_equivalence_check(n_instances: int = 50, tol: float = 1e-12,
                             variant: str = "full") -> dict:
    """Vectorized fusion forward vs scalar-loop oracle on seeded instances."""
    t0 = time.time()
    max_err = 0.0
    for i in range(n_instances):
        img, depth, params = random_instance(1000 + i)
        out = hdgffm_forward(img, depth, params, variant)
        ref = oracle.hdgffm_oracle(img.numpy(), depth.numpy(),
                                   oracle.params_to_numpy(params), variant)
        max_err = max(max_err, float(np.abs(out.numpy() - ref).max()))
    return {"name": f"oracle_equivalence[{variant}]", "max_abs_error": max_err,
            "tolerance": tol, "passed": max_err < tol,
            "elapsed_s": time.time() - t0, "n_instances": n_instances}


def _rel_errors(analytic: np.ndarray, fd: np.ndarray) -> float:
    a, f = analytic.ravel(), fd.ravel()
    denom = np.maximum(np.abs(a), np.abs(f))
    err = 0.0
    for ai, fi, di in zip(a, f, denom):
        if di < ZERO_FLOOR:
            continue
        err = max(err, abs(ai - fi) / di)
    return err


def fusion_gradient_check(seed: int = 7, rel_tol: float = GRAD_REL_TOL,
                          perturb: str | None = None) -> dict:
    """FD check of every fusion parameter group on a fixed small instance.

    Loss is sum(forward(...)**2)/2. ``perturb`` corrupts one group's
    analytic gradient (fault-injection hook for testing the harness).
    """
    t0 = time.time()
    g = torch.Generator().manual_seed(seed)
    img = torch.randn(1, 4, 3, 3, generator=g, dtype=torch.float64)
    depth = torch.randn(1, 2, 3, 3, generator=g, dtype=torch.float64)
    params = random_params(4, 2, seed)
    groups = params.named()
    for t in groups.values():
        t.requires_grad_(True)

    def loss_fn():
        out = hdgffm_forward(img, depth, params)
        return 0.5 * (out * out).sum()

    loss = loss_fn()
    loss.backward()
    results, worst = {}, ("", 0.0)
    for name, t in groups.items():
        analytic = t.grad.numpy().copy()
        if perturb == name:
            analytic = analytic + 1e-2
        fd = np.zeros_like(analytic)
        flat = t.detach().numpy().reshape(-1)
        with torch.no_grad():
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + GRAD_EPS
                up = float(loss_fn())
                flat[j] = orig - GRAD_EPS
                down = float(loss_fn())
                flat[j] = orig
                fd.reshape(-1)[j] = (up - down) / (2 * GRAD_EPS)
        err = _rel_errors(analytic, fd)
        results[name] = err
        if err > worst[1]:
            worst = (name, err)
    return {"name": "fusion_gradient_check", "per_group": results,
            "max_rel_error": worst[1], "worst_group": worst[0],
            "tolerance": rel_tol, "passed": worst[1] < rel_tol,
            "elapsed_s": time.time() - t0}


def end_to_end_gradient_check(seed: int = 3, rel_tol: float = GRAD_REL_TOL,
                              samples_per_group: int = 20,
                              perturb: str | None = None) -> dict:
    """FD check of the full joint loss on a tiny model (L=2, widths (4,8)).

    Large groups are checked on a seeded random sample of entries; small
    groups exhaustively.
    """
    t0 = time.time()
    cfg = TrainConfig(mode="full", widths=(4, 8), depth_base_width=4,
                      blocks_per_level=1, seed=seed, lam=0.1)
    depth_net, enhancer = build_models(cfg, (8, 8))
    depth_net.double()
    enhancer.double()
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():  # dense nonzero params so no gradient path is dead
        for _, p in named_parameters(depth_net, enhancer):
            p.add_(0.2 * torch.randn(p.shape, generator=g, dtype=torch.float64))
    low = torch.rand(2, 3, 8, 8, generator=g, dtype=torch.float64)
    normal = torch.rand(2, 3, 8, 8, generator=g, dtype=torch.float64)
    tdepth = torch.rand(2, 1, 8, 8, generator=g, dtype=torch.float64)

    def loss_fn():
        feats = depth_net(low)
        pred = enhancer(low, feats)
        return restoration_loss(pred, normal) + cfg.lam * depth_loss(feats.depth, tdepth)

    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    results, worst = {}, ("", 0.0)
    for name, p in named_parameters(depth_net, enhancer):
        analytic = p.grad.numpy().copy().reshape(-1)
        if perturb == name:
            analytic = analytic + 1e-2
        flat = p.detach().numpy().reshape(-1)
        idx = (np.arange(flat.size) if flat.size <= samples_per_group
               else rng.choice(flat.size, samples_per_group, replace=False))
        a_s, f_s = [], []
        with torch.no_grad():
            for j in idx:
                orig = flat[j]
                flat[j] = orig + GRAD_EPS
                up = float(loss_fn())
                flat[j] = orig - GRAD_EPS
                down = float(loss_fn())
                flat[j] = orig
                a_s.append(analytic[j])
                f_s.append((up - down) / (2 * GRAD_EPS))
        err = _rel_errors(np.array(a_s), np.array(f_s))
        results[name] = err
        if err > worst[1]:
            worst = (name, err)
    return {"name": "end_to_end_gradient_check", "per_group": results,
            "max_rel_error": worst[1], "worst_group": worst[0],
            "tolerance": rel_tol, "passed": worst[1] < rel_tol,
            "elapsed_s": time.time() - t0}


def run_verification(perturb: str | None = None) -> tuple[bool, list[dict]]:
    checks = [
        oracle_equivalence_check(),
        oracle_equivalence_check(n_instances=10, variant="no_correlation"),
        oracle_equivalence_check(n_instances=10, variant="additive"),
        fusion_gradient_check(perturb=perturb),
        end_to_end_gradient_check(perturb=perturb),
    ]
    return all(c["passed"] for c in checks), checks
