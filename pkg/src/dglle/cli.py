"""Command-line entry point.

Subcommands: synth | train | eval | ablate | verify | plot. All commands are
config-file driven (one YAML file with ``synth:`` and ``train:`` sections)
with flag overrides, write their artifacts plus a run_manifest.json into the
output directory, and are deterministic given (config, flags, seed).

Exit codes: 0 success, 1 failure, 2 usage error. DGLLE_OUT_ROOT, when set,
is prepended to relative output directories.
"""

from __future__ import annotations

import argparse
import filecmp
import json
import os
import shutil
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from .config import (config_hash, load_config_file, synth_config_from,
                     to_plain, train_config_from)
from .errors import DglleError


def _resolve_out(out: str) -> Path:
    root = os.environ.get("DGLLE_OUT_ROOT")
    p = Path(out)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _write_manifest(out_dir: Path, command: str, config, artifacts: list,
                    t0: float, status: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config) if config is not None else None,
        "artifacts": [str(a) for a in artifacts],
        "started_at": t0,
        "ended_at": time.time(),
        "status": status,
    }
    with open(out_dir / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _run(command: str, out_dir: Path, config, body) -> int:
    """Run ``body`` and record the outcome in the run manifest."""
    t0 = time.time()
    try:
        artifacts = body()
    except DglleError as e:
        print(f"error: {e}", file=sys.stderr)
        _write_manifest(out_dir, command, config, [], t0, "failed")
        return 1
    _write_manifest(out_dir, command, config, artifacts, t0, "success")
    return 0


def cmd_synth(args) -> int:
    from .synth import export_dataset

    out_dir = _resolve_out(args.out)
    try:
        cfg = synth_config_from(load_config_file(args.config))
    except DglleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    def body():
        if (out_dir / "manifest.jsonl").exists():
            with tempfile.TemporaryDirectory() as tmp:
                export_dataset(cfg, tmp)
                names = sorted(p.name for p in Path(tmp).iterdir())
                same = all(
                    (out_dir / n).exists() and filecmp.cmp(Path(tmp) / n, out_dir / n,
                                                           shallow=False)
                    for n in names
                ) and names == sorted(p.name for p in out_dir.iterdir()
                                      if p.name != "run_manifest.json")
                if same:
                    print("unchanged: existing export matches this config")
                    return [out_dir / "manifest.jsonl"]
                for n in names:
                    shutil.copyfile(Path(tmp) / n, out_dir / n)
            return [out_dir / "manifest.jsonl"]
        export_dataset(cfg, out_dir)
        return [out_dir / "manifest.jsonl"]

    return _run("synth", out_dir, to_plain(cfg), body)


def _train_cfg(args):
    raw = load_config_file(args.config)
    overrides = {"mode": args.mode, "seed": args.seed, "epochs": args.epochs,
                 "dataset_dir": args.dataset}
    cfg = train_config_from(raw, overrides)
    if args.lambda_scale is not None:
        cfg = replace(cfg, lam=cfg.lam * args.lambda_scale)
    return cfg


def cmd_train(args) -> int:
    from .train import train

    out_dir = _resolve_out(args.out)
    try:
        cfg = _train_cfg(args)
    except DglleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    def body():
        ckpt, report = train(cfg, out_dir, resume=args.resume)
        print(f"trained mode={cfg.mode} lam={cfg.lam} seed={cfg.seed} "
              f"test PSNR={report['splits']['test']['psnr_mean']:.3f}")
        return [ckpt, out_dir / "report.json"]

    return _run("train", out_dir, to_plain(cfg), body)


def cmd_eval(args) -> int:
    from .train import evaluate

    out_dir = _resolve_out(args.out)

    def body():
        report = evaluate(args.checkpoint, args.split, out_dir, dump=args.dump)
        m = report["metrics"]
        print(f"eval split={args.split} PSNR={m['psnr_mean']} SSIM={m['ssim_mean']}")
        return [out_dir / f"eval_{args.split}.json"]

    return _run("eval", out_dir, {"checkpoint": str(args.checkpoint),
                                  "split": args.split}, body)


def cmd_ablate(args) -> int:
    from .train import ABLATION_MODES, run_ablation_suite

    out_dir = _resolve_out(args.out)
    try:
        cfg = _train_cfg(args)
    except DglleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    seeds = [int(s) for s in args.seeds.split(",")]
    modes = tuple(args.modes.split(",")) if args.modes else ABLATION_MODES

    def body():
        table = run_ablation_suite(cfg, seeds, out_dir, modes)
        for row in table["rows"]:
            print(f"{row['mode']:>14}: PSNR {row['psnr_mean']} "
                  f"SSIM {row['ssim_mean']}")
        return [out_dir / "ablation.csv", out_dir / "ablation.json"]

    return _run("ablate", out_dir, to_plain(cfg), body)


def cmd_verify(args) -> int:
    from .verify import run_verification

    ok, checks = run_verification(perturb=args.perturb_grad)
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        err = c.get("max_abs_error", c.get("max_rel_error"))
        extra = f" worst_group={c['worst_group']}" if "worst_group" in c else ""
        print(f"[{status}] {c['name']}: observed={err:.3e} "
              f"tolerance={c['tolerance']:.0e}{extra} ({c['elapsed_s']:.1f}s)")
    if not ok:
        failing = [c["name"] for c in checks if not c["passed"]]
        print(f"verification FAILED: {', '.join(failing)}", file=sys.stderr)
        return 1
    return 0


def cmd_plot(args) -> int:
    from .plots import emit_plots

    out_dir = _resolve_out(args.out)

    def body():
        paths = emit_plots(args.reports, out_dir)
        for p in paths:
            print(f"wrote {p}")
        return paths

    return _run("plot", out_dir, {"reports": [str(r) for r in args.reports]}, body)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dglle",
        description="Depth-guided low-light enhancement: synthesis, training, "
                    "evaluation, ablation, verification, plotting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    p.add_argument("--config", required=True, help="YAML config file (synth section)")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.set_defaults(func=cmd_synth)

    for name, help_text in (("train", "train one model"),
                            ("ablate", "train the full ablation grid")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML config file (train section)")
        p.add_argument("--out", required=True, help="run output directory")
        p.add_argument("--mode", default=None, help="fusion mode override "
                       "(full|decoder_fusion|no_correlation|additive|none)")
        p.add_argument("--lambda-scale", type=float, default=None,
                       help="multiply the configured depth-loss weight (5 or 0.2 "
                            "reproduce the published ablation knobs)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--epochs", type=int, default=None, help="epoch count override")
        p.add_argument("--dataset", default=None, help="dataset directory override")
        if name == "train":
            p.add_argument("--resume", action="store_true",
                           help="resume from the run directory's last checkpoint")
            p.set_defaults(func=cmd_train)
        else:
            p.add_argument("--seeds", default="0", help="comma-separated seed list")
            p.add_argument("--modes", default=None,
                           help="comma-separated mode subset (default: all seven)")
            p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--split", default="test", help="dataset split (train|val|test)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump", action="store_true",
                   help="dump per-sample predictions as array containers")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run oracle-equivalence and gradient checks")
    p.add_argument("--perturb-grad", default=None,
                   help="test hook: corrupt this parameter group's analytic "
                        "gradient to confirm the harness catches it")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="emit metric bars and loss curves from reports")
    p.add_argument("reports", nargs="+", help="report.json paths")
    p.add_argument("--out", required=True, help="figure output directory")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
