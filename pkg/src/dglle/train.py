"""Joint training of the enhancer and depth branch, evaluation, ablation grid.

The optimized objective is  L = L_g + lam * L_d  (Charbonnier restoration
loss plus weighted depth distillation MSE). The depth branch is trained in
every mode, including the plain baseline, so the distillation diagnostics
stay comparable across modes; in mode "none" its features simply never
reach the enhancer.

Determinism contract: model init is driven by torch.manual_seed(seed),
per-epoch shuffling by numpy Generator([seed, epoch]), and all reductions
run in a fixed order, so a rerun with the same config reproduces loss
curves and metrics bit-exactly on one machine.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from pathlib import Path

import numpy as np
import torch

from . import arrayio
from .config import TrainConfig, config_hash, to_plain
from .dataset import SceneDataset, make_teacher
from .depth_net import DepthNet, depth_loss
from .enhancer import Enhancer, restoration_loss
from .errors import CheckpointError, ConfigError, TrainingDiverged
from .metrics import psnr, ssim

ABLATION_MODES = ("full", "decoder_fusion", "no_correlation", "additive", "none",
                  "full_lam_x5", "full_lam_d5")


def dataset_hash(dataset_dir) -> str:
    manifest = Path(dataset_dir) / "manifest.jsonl"
    if not manifest.exists():
        raise ConfigError(f"no dataset manifest at {manifest}; run synth first")
    return config_hash({"manifest": manifest.read_text()})


def build_models(cfg: TrainConfig, image_size: tuple[int, int] | None = None):
    """Seeded model construction; depth net first, then enhancer."""
    torch.manual_seed(cfg.seed)
    depth_net = DepthNet(levels=len(cfg.widths), base_width=cfg.depth_base_width,
                         image_size=image_size)
    enhancer = Enhancer(widths=cfg.widths,
                        depth_widths=tuple(depth_net.widths),
                        mode=cfg.mode, blocks_per_level=cfg.blocks_per_level,
                        tau=cfg.tau, image_size=image_size)
    if cfg.zero_init_fusion:
        enhancer.zero_fusion_()
    return depth_net, enhancer


def named_parameters(depth_net, enhancer):
    pairs = [("depth." + n, p) for n, p in depth_net.named_parameters()]
    pairs += [("enh." + n, p) for n, p in enhancer.named_parameters()]
    return pairs


def _model_arrays(pairs) -> dict:
    return {name: p.detach().cpu().numpy() for name, p in pairs}


def _optimizer_arrays(opt, pairs) -> dict:
    out = {}
    for name, p in pairs:
        st = opt.state.get(p, {})
        if st:
            out["opt." + name + ".exp_avg"] = st["exp_avg"].cpu().numpy()
            out["opt." + name + ".exp_avg_sq"] = st["exp_avg_sq"].cpu().numpy()
            step = st["step"]
            out["opt." + name + ".step"] = np.array(
                [float(step) if not torch.is_tensor(step) else float(step.item())]
            )
    return out


def save_run_checkpoint(path, cfg: TrainConfig, pairs, opt, epoch: int,
                        data_hash: str) -> None:
    arrays = _model_arrays(pairs)
    arrays.update(_optimizer_arrays(opt, pairs))
    arrayio.save_checkpoint(
        path, arrays,
        config_hash=config_hash(cfg),
        mode=cfg.mode,
        extra={"config": to_plain(cfg), "epoch": epoch, "dataset_hash": data_hash},
    )


def load_run_checkpoint(path):
    header, arrays = arrayio.load_checkpoint(path)
    cfg = TrainConfig(**{**header["extra"]["config"],
                         "widths": tuple(header["extra"]["config"]["widths"]),
                         "optimizer": _opt_cfg(header["extra"]["config"]["optimizer"])})
    return header, arrays, cfg


def _opt_cfg(d):
    from .config import OptimConfig
    return OptimConfig(**d)


def _restore(pairs, opt, arrays) -> None:
    with torch.no_grad():
        for name, p in pairs:
            p.copy_(torch.from_numpy(arrays[name]))
    for name, p in pairs:
        key = "opt." + name + ".exp_avg"
        if key in arrays:
            opt.state[p] = {
                "step": torch.tensor(float(arrays["opt." + name + ".step"][0])),
                "exp_avg": torch.from_numpy(arrays[key].copy()),
                "exp_avg_sq": torch.from_numpy(arrays["opt." + name + ".exp_avg_sq"].copy()),
            }


def _forward_losses(depth_net, enhancer, low, normal, teacher_depth, mode):
    feats = depth_net(low)
    pred = enhancer(low, feats if mode != "none" else None)
    lg = restoration_loss(pred, normal)
    ld = depth_loss(feats.depth, teacher_depth)
    return lg, ld


def _split_metrics(depth_net, enhancer, ds, mode, dump_dir=None, ids=None):
    """Deterministic PSNR/SSIM over one split; PSNR inf rows excluded from means."""
    psnrs, ssims, excluded = [], [], 0
    depth_sq_err = []
    with torch.no_grad():
        for i in range(len(ds)):
            low = ds.low[i : i + 1]
            feats = depth_net(low)
            pred = enhancer(low, feats if mode != "none" else None)
            out = pred.clamp(0.0, 1.0)[0].numpy()
            ref = ds.normal[i].numpy()
            p = psnr(out, ref)
            if math.isinf(p):
                excluded += 1
            else:
                psnrs.append(p)
            ssims.append(ssim(out, ref))
            depth_sq_err.append(float(depth_loss(feats.depth, ds.depth[i : i + 1])))
            if dump_dir is not None:
                arrayio.save_array(Path(dump_dir) / f"{ids[i]}_pred.arr", out)
    return {
        "psnr_mean": float(np.mean(psnrs)) if psnrs else None,
        "psnr_std": float(np.std(psnrs)) if psnrs else None,
        "psnr_excluded_inf": excluded,
        "ssim_mean": float(np.mean(ssims)) if ssims else None,
        "ssim_std": float(np.std(ssims)) if ssims else None,
        "psnr_values": ["inf" if math.isinf(v) else v
                        for v in psnrs + [math.inf] * excluded],
        "depth_mse_mean": float(np.mean(depth_sq_err)) if depth_sq_err else None,
        "n_samples": len(ds),
    }


def train(cfg: TrainConfig, out_dir: str | Path, resume: bool = False):
    """Run one training job; returns (checkpoint path, report dict).

    Writes checkpoint.dgck (every epoch, resumable) and report.json.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    data_hash = dataset_hash(cfg.dataset_dir)

    teacher = make_teacher(cfg.teacher, cfg.dataset_dir, cfg.teacher_dir)
    train_ds = SceneDataset(cfg.dataset_dir, "train", teacher)
    val_ds = SceneDataset(cfg.dataset_dir, "val", teacher)
    test_ds = SceneDataset(cfg.dataset_dir, "test", teacher)
    image_size = tuple(train_ds.low.shape[2:]) if len(train_ds) else None

    depth_net, enhancer = build_models(cfg, image_size)
    pairs = named_parameters(depth_net, enhancer)
    opt = torch.optim.Adam([p for _, p in pairs], lr=cfg.optimizer.lr)
    if cfg.optimizer.schedule == "cosine":
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.epochs)
    elif cfg.optimizer.schedule == "constant":
        sched = None
    else:
        raise ConfigError(f"unknown schedule {cfg.optimizer.schedule!r}")

    ckpt_path = out_dir / "checkpoint.dgck"
    start_epoch = 0
    epoch_log = []
    depth_mse_init = _split_metrics(depth_net, enhancer, val_ds, cfg.mode)["depth_mse_mean"]
    if resume and ckpt_path.exists():
        header, arrays, _ = load_run_checkpoint(ckpt_path)
        if header["config_hash"] != config_hash(cfg):
            raise CheckpointError("resume checkpoint was produced by a different config")
        _restore(pairs, opt, arrays)
        start_epoch = header["extra"]["epoch"] + 1
        epoch_log = header["extra"].get("epoch_log", [])
        for _ in range(start_epoch):
            if sched is not None:
                sched.step()

    n = len(train_ds)
    for epoch in range(start_epoch, cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        perm = rng.permutation(n)
        lg_sum = ld_sum = l_sum = 0.0
        batches = 0
        for s in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(perm[s : s + cfg.batch_size].copy())
            low, normal = train_ds.low[idx], train_ds.normal[idx]
            tdepth = train_ds.depth[idx]
            lg, ld = _forward_losses(depth_net, enhancer, low, normal, tdepth, cfg.mode)
            loss = lg + cfg.lam * ld
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, batches)
            opt.zero_grad()
            loss.backward()
            opt.step()
            lg_sum += float(lg.detach())
            ld_sum += float(ld.detach())
            l_sum += float(loss.detach())
            batches += 1
        if sched is not None:
            sched.step()
        epoch_log.append({
            "epoch": epoch,
            "loss_g": lg_sum / max(batches, 1),
            "loss_d": ld_sum / max(batches, 1),
            "loss_total": l_sum / max(batches, 1),
            "lr": opt.param_groups[0]["lr"],
        })
        save_ext = {"config": to_plain(cfg), "epoch": epoch,
                    "dataset_hash": data_hash, "epoch_log": epoch_log}
        arrays = _model_arrays(pairs)
        arrays.update(_optimizer_arrays(opt, pairs))
        arrayio.save_checkpoint(ckpt_path, arrays, config_hash=config_hash(cfg),
                                mode=cfg.mode, extra=save_ext)

    depth_net.eval()
    enhancer.eval()
    report = {
        "config": to_plain(cfg),
        "config_hash": config_hash(cfg),
        "dataset_hash": data_hash,
        "mode": cfg.mode,
        "lam": cfg.lam,
        "seed": cfg.seed,
        "epochs": epoch_log,
        "splits": {
            "val": _split_metrics(depth_net, enhancer, val_ds, cfg.mode),
            "test": _split_metrics(depth_net, enhancer, test_ds, cfg.mode),
        },
        "depth_mse_init_val": depth_mse_init,
        "depth_mse_final_val": None,
        "wall_clock_s": None,
    }
    report["depth_mse_final_val"] = report["splits"]["val"]["depth_mse_mean"]
    report["wall_clock_s"] = time.time() - t0
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return ckpt_path, report


def evaluate(checkpoint_path, split: str, out_dir=None, dump: bool = False) -> dict:
    """Deterministic metrics for one checkpoint on one split."""
    header, arrays, cfg = load_run_checkpoint(checkpoint_path)
    if dataset_hash(cfg.dataset_dir) != header["extra"]["dataset_hash"]:
        raise CheckpointError(
            "dataset manifest hash does not match the checkpoint's training dataset"
        )
    teacher = make_teacher(cfg.teacher, cfg.dataset_dir, cfg.teacher_dir)
    ds = SceneDataset(cfg.dataset_dir, split, teacher)
    image_size = tuple(ds.low.shape[2:]) if len(ds) else None
    depth_net, enhancer = build_models(cfg, image_size)
    pairs = named_parameters(depth_net, enhancer)
    with torch.no_grad():
        for name, p in pairs:
            p.copy_(torch.from_numpy(arrays[name]))
    depth_net.eval()
    enhancer.eval()
    dump_dir = None
    if dump and out_dir is not None:
        dump_dir = Path(out_dir) / f"dump_{split}"
        dump_dir.mkdir(parents=True, exist_ok=True)
    metrics = _split_metrics(depth_net, enhancer, ds, cfg.mode,
                             dump_dir=dump_dir, ids=ds.ids)
    report = {
        "config": to_plain(cfg),
        "config_hash": header["config_hash"],
        "mode": cfg.mode,
        "split": split,
        "metrics": metrics,
    }
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / f"eval_{split}.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report


def _mode_cfg(base: TrainConfig, mode_tag: str) -> TrainConfig:
    cfg = dataclasses.replace(base)
    if mode_tag == "full_lam_x5":
        cfg = dataclasses.replace(cfg, mode="full", lam=base.lam * 5.0)
    elif mode_tag == "full_lam_d5":
        cfg = dataclasses.replace(cfg, mode="full", lam=base.lam / 5.0)
    else:
        cfg = dataclasses.replace(cfg, mode=mode_tag)
    return cfg


def run_ablation_suite(base_cfg: TrainConfig, seeds, out_dir,
                       modes=ABLATION_MODES) -> dict:
    """Train every (mode, seed) cell; emit a per-mode mean/std table.

    Per-mode failures are isolated: a failed cell is recorded as "FAILED"
    and the remaining modes still run.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, per_run = [], {}
    for mode_tag in modes:
        cell_psnr, cell_ssim, failed = [], [], False
        for seed in seeds:
            cfg = dataclasses.replace(_mode_cfg(base_cfg, mode_tag), seed=seed)
            run_dir = out_dir / f"{mode_tag}_seed{seed}"
            try:
                _, report = train(cfg, run_dir)
            except Exception as e:  # isolate per-mode failures
                per_run[f"{mode_tag}_seed{seed}"] = {"error": repr(e)}
                failed = True
                continue
            t = report["splits"]["test"]
            per_run[f"{mode_tag}_seed{seed}"] = {
                "psnr": t["psnr_mean"], "ssim": t["ssim_mean"],
                "report": str(run_dir / "report.json"),
            }
            cell_psnr.append(t["psnr_mean"])
            cell_ssim.append(t["ssim_mean"])
        if failed and not cell_psnr:
            rows.append({"mode": mode_tag, "psnr_mean": "FAILED", "psnr_std": "FAILED",
                         "ssim_mean": "FAILED", "ssim_std": "FAILED"})
        else:
            rows.append({
                "mode": mode_tag,
                "psnr_mean": float(np.mean(cell_psnr)),
                "psnr_std": float(np.std(cell_psnr)),
                "ssim_mean": float(np.mean(cell_ssim)),
                "ssim_std": float(np.std(cell_ssim)),
            })
    table = {"rows": rows, "seeds": list(seeds), "runs": per_run}

    full = [per_run.get(f"full_seed{s}", {}).get("psnr") for s in seeds]
    none = [per_run.get(f"none_seed{s}", {}).get("psnr") for s in seeds]
    if all(v is not None for v in full) and all(v is not None for v in none):
        wins = sum(1 for f, n in zip(full, none) if f > n)
        table["full_vs_none"] = {
            "mean_gap_db": float(np.mean(full) - np.mean(none)),
            "paired_wins": wins,
            "n_seeds": len(seeds),
        }

    with open(out_dir / "ablation.json", "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
    with open(out_dir / "ablation.csv", "w") as fh:
        fh.write("mode,psnr_mean,psnr_std,ssim_mean,ssim_std\n")
        for r in rows:
            fh.write(f"{r['mode']},{r['psnr_mean']},{r['psnr_std']},"
                     f"{r['ssim_mean']},{r['ssim_std']}\n")
    return table
