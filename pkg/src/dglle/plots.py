"""Headless figure emission for reports: metric bars and loss curves."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ValidationError


def load_report(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: malformed report at line {e.lineno}") from e


def _label(report: dict) -> str:
    return f"{report.get('mode', '?')}/seed{report.get('seed', '?')}"


def emit_plots(report_paths: list[str | Path], out_dir: str | Path) -> list[Path]:
    """Write a PSNR/SSIM bar chart and a loss-curve figure; returns the paths.

    Deterministic given inputs: fixed figure geometry, no timestamps.
    """
    if not report_paths:
        raise ValidationError("no report paths given")
    reports = [load_report(p) for p in report_paths]
    for p, r in zip(report_paths, reports):
        if "epochs" not in r or "splits" not in r:
            raise ValidationError(f"{p}: missing 'epochs'/'splits' sections")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = [_label(r) for r in reports]

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, key, title in zip(axes, ("psnr_mean", "ssim_mean"), ("PSNR (dB)", "SSIM")):
        vals = [r["splits"]["test"][key] for r in reports]
        errs = [r["splits"]["test"][key.replace("mean", "std")] for r in reports]
        ax.bar(range(len(vals)), vals, yerr=errs, color="#4878d0", capsize=3)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_title(title)
    fig.tight_layout()
    bars_path = out_dir / "metrics_bars.png"
    fig.savefig(bars_path, dpi=110)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    for r, label in zip(reports, labels):
        ax.plot([e["epoch"] for e in r["epochs"]],
                [e["loss_total"] for e in r["epochs"]], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("total loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    curves_path = out_dir / "loss_curves.png"
    fig.savefig(curves_path, dpi=110)
    plt.close(fig)
    return [bars_path, curves_path]
