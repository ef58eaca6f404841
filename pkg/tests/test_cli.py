"""CLI contracts: exit codes, config handling, golden label dump, and the
track/eval round trip on a tiny trained-free model."""

import json
from pathlib import Path

import numpy as np
import pytest

from apntrack.checkpoint import save_checkpoint
from apntrack.cli import main
from apntrack.config import from_dict, load_config, strip_comments, to_dict
from apntrack.errors import ConfigError
from apntrack.network import TrackNet
from apntrack.synthetic import SyntheticScene, write_sequence

DATA = Path(__file__).parent / "data"


def tiny_model_dict():
    return {
        "model": {
            "channels": [8, 8, 8, 8, 8],
            "kernels": [3, 3, 3, 3, 3],
            "strides": [2, 1, 2, 1, 1],
            "template_size": 32,
            "search_size": 48,
            "fusion_channels": 8,
        }
    }


class TestConfig:
    def test_defaults_carry_branch_weight(self):
        cfg = load_config()
        assert cfg.loss.lambda_cls1 == 1.2

    def test_paper_preset_patch_sizes(self):
        cfg = load_config(preset="paper")
        assert cfg.model.template_size == 127
        assert cfg.model.search_size == 287
        assert cfg.schedule.lr_start == 0.005
        assert cfg.schedule.lr_end == 0.0005

    def test_freeze_exceeding_total_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"schedule": {"freeze_epochs": 30,
                                                 "total_epochs": 20}}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_key_rejected_with_name(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"schedule": {"warmup_epochs": 3}}))
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "warmup_epochs" in str(err.value)

    def test_type_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"schedule": {"batch_size": "eight"}}))
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "batch_size" in str(err.value)

    def test_comment_stripping(self):
        text = '{ // inline\n "seed": 3, /* block\n comment */ "model": {} }'
        assert json.loads(strip_comments(text)) == {"seed": 3, "model": {}}
        keep = '{"a": "url//not-comment"}'
        assert json.loads(strip_comments(keep)) == {"a": "url//not-comment"}


class TestExitCodes:
    def test_version_exits_zero(self, capsys):
        assert main(["--version"]) == 0
        assert "apntrack" in capsys.readouterr().out

    def test_unknown_subcommand_exits_two(self):
        assert main(["frobnicate"]) == 2

    def test_config_error_exits_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schedule": {"freeze_epochs": 30,
                                                "total_epochs": 20}}))
        assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_runtime_failure_exits_one(self, tmp_path):
        missing = tmp_path / "nope.ckpt"
        code = main(["track", "--checkpoint", str(missing),
                     "--sequence", str(tmp_path), "--init", "1,1,5,5",
                     "--out", str(tmp_path / "r.txt")])
        assert code == 1

    def test_degenerate_labels_check_box_exits_two(self):
        assert main(["labels-check", "--box", "30,30,30,60"]) == 2


class TestPrintConfig:
    def test_round_trip_reproduces_itself(self, tmp_path, capsys):
        assert main(["train", "--print-config"]) == 0
        text = capsys.readouterr().out
        path = tmp_path / "cfg.json"
        path.write_text(text)
        assert main(["train", "--config", str(path), "--print-config"]) == 0
        again = capsys.readouterr().out
        assert again == text

    def test_protocol_values_annotated(self, capsys):
        main(["train", "--preset", "paper", "--print-config"])
        out = capsys.readouterr().out
        assert "// reference protocol" in out
        assert '"lambda_cls1": 1.2' in out
        # comments precede the keys they describe
        lines = out.split("\n")
        idx = next(i for i, ln in enumerate(lines) if '"lambda_cls1"' in ln)
        assert "//" in lines[idx - 1]


class TestLabelsCheck:
    def test_golden_dump_byte_stable(self, tmp_path):
        out = tmp_path / "dump.csv"
        code = main(["labels-check", "--patch", "96,96", "--stride", "4",
                     "--map", "12,12", "--box", "30,30,60,60",
                     "--area-ratio", "2.0", "--out", str(out)])
        assert code == 0
        assert out.read_bytes() == (DATA / "labels_check_golden.csv").read_bytes()

    def test_full_cover_box_all_inside(self, capsys):
        code = main(["labels-check", "--patch", "96,96", "--stride", "4",
                     "--map", "12,12", "--box", "0,0,96,96"])
        assert code == 0
        rows = capsys.readouterr().out.strip().split("\n")[1:]
        assert all(row.split(",")[9] == "1" for row in rows)


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpt")
    cfg = from_dict(tiny_model_dict())
    net = TrackNet(cfg.model, seed=5)
    path = root / "model.ckpt"
    save_checkpoint(path, net.state_dict(), to_dict(cfg))
    return path


@pytest.fixture(scope="module")
def tiny_sequence(tmp_path_factory):
    root = tmp_path_factory.mktemp("seq")
    scene = SyntheticScene(frame_height=96, frame_width=96,
                           start_center=(48.0, 48.0), object_size=(18.0, 14.0),
                           color=(235.0, 115.0, 55.0), velocity=(0.4, 0.2), seed=8)
    write_sequence(root / "demo", scene, 6, attributes=["fast-motion"])
    return root / "demo"


class TestTrackAndEval:
    def test_track_writes_results_and_times(self, tiny_checkpoint, tiny_sequence,
                                            tmp_path, capsys):
        gt_line = (tiny_sequence / "groundtruth.txt").read_text().splitlines()[0]
        out = tmp_path / "results" / "demo.txt"
        code = main(["track", "--checkpoint", str(tiny_checkpoint),
                     "--sequence", str(tiny_sequence), "--init", gt_line,
                     "--out", str(out)])
        assert code == 0
        assert "FPS" in capsys.readouterr().out
        lines = out.read_text().strip().split("\n")
        assert len(lines) == 6
        first = [float(v) for v in lines[0].split(",")]
        expect = [float(v) for v in gt_line.split(",")]
        np.testing.assert_allclose(first, expect, atol=1e-3)
        times = (out.parent / "demo_time.txt").read_text().strip().split("\n")
        assert len(times) == 6

    def test_eval_on_tracked_results(self, tiny_checkpoint, tiny_sequence,
                                     tmp_path, capsys):
        results = tmp_path / "results"
        out = results / "demo.txt"
        gt_line = (tiny_sequence / "groundtruth.txt").read_text().splitlines()[0]
        main(["track", "--checkpoint", str(tiny_checkpoint),
              "--sequence", str(tiny_sequence), "--init", gt_line,
              "--out", str(out)])
        ann = tmp_path / "annotations"
        ann.mkdir()
        (ann / "demo.txt").write_text((tiny_sequence / "groundtruth.txt").read_text())
        (ann / "demo.json").write_text(
            (tiny_sequence / "attributes.json").read_text())
        report = tmp_path / "report"
        code = main(["eval", "--results", str(results),
                     "--annotations", str(ann), "--out", str(report)])
        assert code == 0
        assert (report / "overall.csv").exists()
        assert (report / "attr_fast-motion.csv").exists()
        assert (report / "success.svg").exists()
        assert (report / "precision.svg").exists()
        text = capsys.readouterr().out
        assert "AUC" in text and "FPS" in text

    def test_eval_missing_results_exits_two(self, tiny_sequence, tmp_path):
        ann = tmp_path / "annotations"
        ann.mkdir()
        (ann / "demo.txt").write_text((tiny_sequence / "groundtruth.txt").read_text())
        empty = tmp_path / "none"
        empty.mkdir()
        code = main(["eval", "--results", str(empty), "--annotations", str(ann),
                     "--out", str(tmp_path / "rep")])
        assert code == 2


class TestTrainCli:
    def test_short_training_run_writes_outputs(self, tmp_path):
        cfg = dict(tiny_model_dict())
        cfg["schedule"] = {"total_epochs": 1, "freeze_epochs": 0,
                           "steps_per_epoch": 2, "batch_size": 2}
        cfg["data"] = {"frame_height": 96, "frame_width": 96, "num_scenes": 4,
                       "min_object": 14.0, "max_object": 20.0}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "run"
        code = main(["train", "--config", str(path), "--out", str(out),
                     "--seed", "1"])
        assert code == 0
        assert (out / "model.ckpt").exists()
        assert (out / "loss_history.csv").exists()
