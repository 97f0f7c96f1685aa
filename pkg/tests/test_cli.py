"""CLI smoke and behavior tests.

Everything runs in-process through dglle.cli.main(argv) on the 16x16 tiny
dataset, so the whole file stays fast.
"""

import json
from pathlib import Path

import pytest

from dglle.cli import build_parser, main


def write_yaml(path, text):
    path.write_text(text)
    return str(path)


TINY_YAML = """\
synth:
  image_size: 16
  counts: {train: 8, val: 3, test: 3}
train:
  mode: full
  widths: [4, 8]
  depth_base_width: 4
  blocks_per_level: 1
  epochs: 2
  batch_size: 4
  seed: 0
  optimizer: {lr: 1.0e-3}
"""


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    return write_yaml(tmp_path_factory.mktemp("cfg") / "tiny.yaml", TINY_YAML)


class TestParser:
    def test_every_flag_has_help(self):
        parser = build_parser()
        sub = next(a for a in parser._actions
                   if isinstance(a, type(parser._subparsers._group_actions[0])))
        for name, sp in sub.choices.items():
            for action in sp._actions:
                assert action.help, f"{name} {action.option_strings} missing help"

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as e:
            main(["train"])  # missing required flags
        assert e.value.code == 2

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == 2


class TestSynth:
    def test_export_and_unchanged_rerun(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "ds"
        assert main(["synth", "--config", cfg_file, "--out", str(out)]) == 0
        assert (out / "manifest.jsonl").exists()
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["status"] == "success"
        first = (out / "manifest.jsonl").read_bytes()

        assert main(["synth", "--config", cfg_file, "--out", str(out)]) == 0
        assert "unchanged" in capsys.readouterr().out
        assert (out / "manifest.jsonl").read_bytes() == first

    def test_unknown_key_named_in_error(self, tmp_path, capsys):
        bad = write_yaml(tmp_path / "bad.yaml", "synth: {imge_size: 16}\n")
        assert main(["synth", "--config", bad, "--out", str(tmp_path / "o")]) == 1
        assert "imge_size" in capsys.readouterr().err

    def test_out_root_env(self, cfg_file, tmp_path, monkeypatch):
        monkeypatch.setenv("DGLLE_OUT_ROOT", str(tmp_path))
        assert main(["synth", "--config", cfg_file, "--out", "rooted"]) == 0
        assert (tmp_path / "rooted" / "manifest.jsonl").exists()


@pytest.fixture(scope="module")
def cli_dataset(cfg_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ds")
    assert main(["synth", "--config", cfg_file, "--out", str(out)]) == 0
    return out


class TestTrainEval:
    def test_train_eval_roundtrip(self, cfg_file, cli_dataset, tmp_path, capsys):
        run = tmp_path / "run"
        rc = main(["train", "--config", cfg_file, "--dataset", str(cli_dataset),
                   "--out", str(run)])
        assert rc == 0
        assert "test PSNR=" in capsys.readouterr().out
        report = json.loads((run / "report.json").read_text())
        assert report["config"]["mode"] == "full"
        manifest = json.loads((run / "run_manifest.json").read_text())
        assert manifest["status"] == "success"
        assert any(a.endswith("report.json") for a in manifest["artifacts"])

        ckpt = run / "checkpoint.dgck"
        ev = tmp_path / "ev"
        rc = main(["eval", "--checkpoint", str(ckpt), "--split", "val",
                   "--out", str(ev)])
        assert rc == 0
        eval_report = json.loads((ev / "eval_val.json").read_text())
        assert eval_report["metrics"]["psnr_mean"] == pytest.approx(
            report["splits"]["val"]["psnr_mean"])

    def test_lambda_scale_in_manifest(self, cfg_file, cli_dataset, tmp_path):
        run = tmp_path / "run"
        rc = main(["train", "--config", cfg_file, "--dataset", str(cli_dataset),
                   "--epochs", "1", "--lambda-scale", "5", "--out", str(run)])
        assert rc == 0
        manifest = json.loads((run / "run_manifest.json").read_text())
        assert manifest["config"]["lam"] == pytest.approx(0.5)

    def test_mode_override_recorded(self, cfg_file, cli_dataset, tmp_path):
        run = tmp_path / "run"
        rc = main(["train", "--config", cfg_file, "--dataset", str(cli_dataset),
                   "--epochs", "1", "--mode", "additive", "--out", str(run)])
        assert rc == 0
        report = json.loads((run / "report.json").read_text())
        assert report["config"]["mode"] == "additive"

    def test_bad_mode_fails_before_training(self, cfg_file, cli_dataset,
                                            tmp_path, capsys):
        rc = main(["train", "--config", cfg_file, "--dataset", str(cli_dataset),
                   "--mode", "bogus", "--out", str(tmp_path / "run")])
        assert rc == 1
        assert "bogus" in capsys.readouterr().err
        assert not (tmp_path / "run").exists()

    def test_eval_missing_checkpoint_fails(self, tmp_path, capsys):
        rc = main(["eval", "--checkpoint", str(tmp_path / "nope.ckpt"),
                   "--out", str(tmp_path / "ev")])
        assert rc == 1
        manifest = json.loads((tmp_path / "ev" / "run_manifest.json").read_text())
        assert manifest["status"] == "failed"


class TestAblate:
    def test_subset_table(self, cfg_file, cli_dataset, tmp_path, capsys):
        out = tmp_path / "abl"
        rc = main(["ablate", "--config", cfg_file, "--dataset", str(cli_dataset),
                   "--epochs", "1", "--seeds", "0", "--modes", "none,additive",
                   "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "none" in text and "additive" in text
        table = json.loads((out / "ablation.json").read_text())
        assert [r["mode"] for r in table["rows"]] == ["none", "additive"]
        csv_lines = (out / "ablation.csv").read_text().strip().splitlines()
        assert len(csv_lines) == 3  # header + two modes


class TestVerify:
    def test_fault_injection_caught(self, capsys):
        rc = main(["verify", "--perturb-grad", "w_q"])
        assert rc == 1
        out = capsys.readouterr()
        assert "[FAIL]" in out.out
        assert "FAILED" in out.err


class TestPlot:
    def test_deterministic_figures(self, cfg_file, cli_dataset, tmp_path):
        run = tmp_path / "run"
        assert main(["train", "--config", cfg_file, "--dataset",
                     str(cli_dataset), "--epochs", "1", "--out", str(run)]) == 0
        report = str(run / "report.json")
        out_a, out_b = tmp_path / "fa", tmp_path / "fb"
        assert main(["plot", report, "--out", str(out_a)]) == 0
        assert main(["plot", report, "--out", str(out_b)]) == 0
        names = sorted(p.name for p in out_a.glob("*.png"))
        assert names == ["loss_curves.png", "metrics_bars.png"]
        for n in names:
            assert (out_a / n).read_bytes() == (out_b / n).read_bytes()

    def test_bad_report_fails(self, tmp_path, capsys):
        bad = tmp_path / "report.json"
        bad.write_text("{not json")
        rc = main(["plot", str(bad), "--out", str(tmp_path / "figs")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err
