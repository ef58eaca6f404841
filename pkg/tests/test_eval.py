"""Metric oracles, aggregation conventions, and report emission."""

import numpy as np
import pytest

from apntrack.config import EvalConfig
from apntrack.evaluate import (SequenceRecord, auc_exact, cle_threshold_grid,
                               evaluate, iou_threshold_grid, precision_at,
                               precision_curve, success_curve, write_report)
from apntrack.geometry import CornerBox

CFG = EvalConfig()


def shifted_box(gt, dx=0.0, dy=0.0):
    return CornerBox(gt.x1 + dx, gt.y1 + dy, gt.x2 + dx, gt.y2 + dy)


def brute_success(ious, thresholds):
    return np.array([sum(v > t for v in ious) / len(ious) for t in thresholds])


def brute_precision(cles, thresholds):
    return np.array([sum(v < t for v in cles) / len(cles) for t in thresholds])


class TestCurves:
    def test_all_perfect(self):
        curve = success_curve([1.0, 1.0, 1.0])
        assert curve[0] == 1.0
        assert auc_exact([1.0, 1.0, 1.0]) == 1.0

    def test_all_zero(self):
        curve = success_curve([0.0, 0.0])
        assert (curve == 0.0).all()
        assert auc_exact([0.0, 0.0]) == 0.0

    def test_two_value_fixture_against_brute_force(self):
        ious = [0.4, 0.8]
        grid = iou_threshold_grid()
        curve = success_curve(ious, grid)
        t_half = int(np.where(np.isclose(grid, 0.5))[0][0])
        assert curve[t_half] == 0.5
        np.testing.assert_array_equal(curve, brute_success(ious, grid))
        # exact step integral equals the mean IoU; trapezoid agrees within
        # one grid cell
        assert auc_exact(ious) == pytest.approx(0.6)
        assert abs(np.trapezoid(curve, grid) - auc_exact(ious)) <= 0.02

    def test_precision_fixtures(self):
        assert precision_at([0.0, 0.0], 20.0) == 1.0
        assert precision_at([5.0, 25.0], 20.0) == 0.5
        assert precision_at([1e6, 1e6], 20.0) == 0.0

    def test_precision_curve_against_brute_force(self):
        cles = [0.0, 5.0, 30.0]
        grid = cle_threshold_grid()
        np.testing.assert_array_equal(precision_curve(cles, grid),
                                      brute_precision(cles, grid))

    def test_monotonicity(self):
        rng = np.random.default_rng(0)
        ious = rng.uniform(0, 1, 40)
        cles = rng.uniform(0, 60, 40)
        s = success_curve(ious)
        p = precision_curve(cles)
        assert (np.diff(s) <= 0).all()
        assert (np.diff(p) >= 0).all()

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            success_curve([])
        with pytest.raises(ValueError):
            precision_curve([])
        with pytest.raises(ValueError):
            auc_exact([])


class TestEvaluate:
    def test_hand_built_fixture_matches_brute_force(self):
        gt = CornerBox(10, 10, 30, 30)
        gts = [gt, gt, gt]
        preds = [
            gt,                                    # IoU 1, CLE 0
            CornerBox(20, 10, 40, 30),             # IoU 1/3... replaced below
            CornerBox(200, 200, 220, 220),         # IoU 0
        ]
        # construct CLE {0, 5, 30} exactly: shift by (3,4) and (18,24)
        preds[1] = shifted_box(gt, 3, 4)
        preds[2] = shifted_box(gt, 18, 24)
        from apntrack.geometry import cle, iou
        ious = [iou(p, g) for p, g in zip(preds, gts)]
        cles = [cle(p, g) for p, g in zip(preds, gts)]
        assert cles == [0.0, 5.0, 30.0]

        records = [SequenceRecord(name="seq", gt_boxes=gts)]
        report = evaluate({"seq": preds}, records, CFG)
        m = report.per_sequence[0]
        np.testing.assert_array_equal(
            m.success, brute_success(ious, iou_threshold_grid(CFG.iou_step)))
        np.testing.assert_array_equal(
            m.precision, brute_precision(cles, cle_threshold_grid(CFG.cle_max,
                                                                  CFG.cle_step)))
        assert m.auc == pytest.approx(np.mean(ious))
        assert m.precision_at_rank == pytest.approx(2.0 / 3.0)

    def test_perfect_tracking_scores_one_everywhere(self):
        gt = [CornerBox(5, 5, 20, 25), CornerBox(6, 6, 21, 26)]
        records = [SequenceRecord(name="s", gt_boxes=gt, attributes=["none"])]
        report = evaluate({"s": list(gt)}, records, CFG)
        assert report.overall.auc == 1.0
        assert report.overall.precision_at_rank == 1.0
        assert report.attributes["none"].auc == 1.0

    def test_per_sequence_averaging(self):
        a_gt = [CornerBox(0, 0, 10, 10)] * 2
        b_gt = [CornerBox(0, 0, 10, 10)] * 3
        results = {
            "a": list(a_gt),                               # AUC 1
            "b": [CornerBox(50, 50, 60, 60)] * 3,          # AUC 0
        }
        records = [SequenceRecord(name="a", gt_boxes=a_gt),
                   SequenceRecord(name="b", gt_boxes=b_gt)]
        report = evaluate(results, records, CFG)
        assert report.overall.auc == pytest.approx(0.5)

    def test_absent_gt_frames_excluded(self):
        gt = [CornerBox(0, 0, 10, 10), None, CornerBox(0, 0, 10, 10)]
        preds = [CornerBox(0, 0, 10, 10), CornerBox(90, 90, 99, 99),
                 CornerBox(0, 0, 10, 10)]
        report = evaluate({"s": preds}, [SequenceRecord(name="s", gt_boxes=gt)], CFG)
        assert report.per_sequence[0].n_scored == 2
        assert report.per_sequence[0].auc == 1.0

    def test_attribute_slices_partition(self):
        gt = [CornerBox(0, 0, 10, 10)]
        records = [
            SequenceRecord(name="s1", gt_boxes=gt, attributes=["fast-motion",
                                                               "low-resolution"]),
            SequenceRecord(name="s2", gt_boxes=gt, attributes=["fast-motion"]),
            SequenceRecord(name="s3", gt_boxes=gt, attributes=[]),
        ]
        results = {n: list(gt) for n in ("s1", "s2", "s3")}
        report = evaluate(results, records, CFG)
        assert set(report.attributes) == {"fast-motion", "low-resolution"}
        assert report.attribute_members["fast-motion"] == ["s1", "s2"]
        assert report.attribute_members["low-resolution"] == ["s1"]
        assert len(report.per_sequence) == 3

    def test_alignment_mismatch_names_sequence(self):
        gt = [CornerBox(0, 0, 10, 10)] * 3
        with pytest.raises(ValueError) as err:
            evaluate({"seqX": [CornerBox(0, 0, 10, 10)] * 2},
                     [SequenceRecord(name="seqX", gt_boxes=gt)], CFG)
        assert "seqX" in str(err.value)

    def test_missing_results_named(self):
        with pytest.raises(ValueError) as err:
            evaluate({}, [SequenceRecord(name="lost", gt_boxes=[CornerBox(0, 0, 1, 1)])],
                     CFG)
        assert "lost" in str(err.value)

    def test_fps_aggregation(self):
        gt = [CornerBox(0, 0, 10, 10)]
        records = [SequenceRecord(name="a", gt_boxes=gt),
                   SequenceRecord(name="b", gt_boxes=gt)]
        report = evaluate({"a": list(gt), "b": list(gt)}, records, CFG,
                          fps={"a": 100.0, "b": 50.0})
        assert report.overall.fps == pytest.approx(75.0)


class TestReportEmission:
    def _report(self):
        gt = [CornerBox(0, 0, 10, 10), CornerBox(2, 2, 12, 12)]
        records = [SequenceRecord(name="alpha", gt_boxes=gt,
                                  attributes=["partial-occlusion"]),
                   SequenceRecord(name="beta", gt_boxes=gt)]
        results = {"alpha": list(gt), "beta": [shifted_box(b, 1, 1) for b in gt]}
        return evaluate(results, records, CFG, fps={"alpha": 42.0})

    def test_emitted_files(self, tmp_path):
        paths = write_report(self._report(), tmp_path)
        names = {p.name for p in paths}
        assert names == {"overall.csv", "attr_partial-occlusion.csv",
                         "success.svg", "precision.svg"}
        text = (tmp_path / "overall.csv").read_text()
        lines = text.strip().split("\n")
        assert lines[0] == "sequence,frames,auc,precision_at_20,fps"
        assert len(lines) == 4  # header + 2 sequences + overall row
        assert lines[-1].startswith("overall,")
        attr = (tmp_path / "attr_partial-occlusion.csv").read_text().strip().split("\n")
        assert any(row.startswith("alpha,") for row in attr)
        assert not any(row.startswith("beta,") for row in attr)

    def test_byte_identical_across_runs(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        write_report(self._report(), a_dir)
        write_report(self._report(), b_dir)
        for name in ("overall.csv", "success.svg", "precision.svg"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_svg_is_wellformed_xml(self, tmp_path):
        import xml.etree.ElementTree as ET

        write_report(self._report(), tmp_path)
        for name in ("success.svg", "precision.svg"):
            ET.fromstring((tmp_path / name).read_text())
