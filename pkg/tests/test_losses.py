"""Worked examples, masking invariance, and support conventions for the
training objectives."""

import numpy as np
import pytest

import apntrack.autograd as ag
from apntrack import losses
from apntrack.config import LossWeights, ModelConfig, RunConfig
from apntrack.errors import TrainingError
from apntrack.geometry import CornerBox
from apntrack.labels import build_batch_labels

W = LossWeights()


def tiny_model():
    return ModelConfig(in_channels=3, channels=[8, 8, 8, 8, 8],
                       kernels=[3, 3, 3, 3, 3], strides=[2, 1, 2, 1, 1],
                       template_size=32, search_size=48, fusion_channels=8)


class TestApnLoss:
    def test_exact_predictions_give_zero(self):
        targets = np.arange(4 * 3 * 3, dtype=float).reshape(1, 4, 3, 3)
        mask = np.ones((1, 3, 3))
        loss, degenerate = losses.apn_loss(ag.Tensor(targets), targets, mask)
        assert loss.item() == 0.0 and not degenerate

    def test_single_masked_point_hand_sum(self):
        targets = np.zeros((1, 4, 3, 3))
        pred = np.zeros((1, 4, 3, 3))
        pred[0, :, 1, 1] = [1.0, -1.0, 2.0, 0.0]
        mask = np.zeros((1, 3, 3))
        mask[0, 1, 1] = 1.0
        loss, _ = losses.apn_loss(ag.Tensor(pred), targets, mask)
        assert loss.item() == 4.0

    def test_errors_outside_mask_ignored(self):
        targets = np.zeros((1, 4, 2, 2))
        pred = np.zeros((1, 4, 2, 2))
        pred[0, :, 0, 0] = 1.0
        mask = np.zeros((1, 2, 2))
        mask[0, 0, 0] = 1.0
        base = losses.apn_loss(ag.Tensor(pred), targets, mask)[0].item()
        pred2 = pred.copy()
        pred2[0, :, 1, 1] = 99.0  # outside the mask
        doubled = losses.apn_loss(ag.Tensor(pred2), targets, mask)[0].item()
        assert base == doubled

    def test_empty_mask_flags_degenerate(self):
        pred = ag.Tensor(np.ones((1, 4, 2, 2)))
        loss, degenerate = losses.apn_loss(pred, np.zeros((1, 4, 2, 2)),
                                           np.zeros((1, 2, 2)))
        assert loss.item() == 0.0 and degenerate

    def test_gradient_is_masked_sign(self):
        targets = np.zeros((1, 4, 2, 2))
        pred = ag.parameter(np.full((1, 4, 2, 2), 2.0))
        mask = np.zeros((1, 2, 2))
        mask[0, 0, 1] = 1.0
        loss, _ = losses.apn_loss(pred, targets, mask)
        loss.backward()
        expect = np.zeros((1, 4, 2, 2))
        expect[0, :, 0, 1] = 1.0
        np.testing.assert_array_equal(pred.grad, expect)


class TestClassificationLoss:
    def test_perfect_predictions_near_zero(self):
        h = w = 3
        labels1 = np.zeros((1, h, w), dtype=np.int64)
        labels1[0, 1, 1] = 1
        labels2 = np.zeros((1, h, w), dtype=np.int64)
        labels2[0, 1, 1] = 1
        cls3_targets = np.zeros((1, h, w))
        cls3_targets[0, 1, 1] = 1.0  # single inside point at the exact center
        cls1 = np.zeros((1, 2, h, w))
        cls1[0, 0] = 20.0
        cls1[0, 1, 1, 1], cls1[0, 0, 1, 1] = 20.0, 0.0
        cls2 = cls1.copy()
        cls3 = np.full((1, 1, h, w), 1.0 - 1e-9)
        loss, degenerate = losses.classification_loss(
            ag.Tensor(cls1), ag.Tensor(cls2), ag.Tensor(cls3),
            labels1, labels2, cls3_targets, W)
        assert loss.item() <= 1e-6 and not degenerate

    def test_uniform_logits_give_ln2_per_point(self):
        h = w = 4
        logits = ag.Tensor(np.zeros((1, 2, h, w)))
        labels = np.zeros((1, h, w), dtype=np.int64)
        term, _ = losses._masked_cross_entropy(logits, labels,
                                               np.ones((1, h, w), bool))
        assert term.item() == pytest.approx(np.log(2.0))

    def test_bce_half_versus_one_hand_value(self):
        probs = ag.Tensor(np.full((1, 1, 2, 2), 0.5))
        targets = np.zeros((1, 2, 2))
        targets[0, 0, 0] = 1.0
        support = np.zeros((1, 2, 2), bool)
        support[0, 0, 0] = True
        term, _ = losses._masked_bce(probs, targets, support)
        assert term.item() == pytest.approx(-np.log(0.5))

    def test_ignored_points_excluded(self):
        h = w = 2
        labels1 = np.full((1, h, w), -1, dtype=np.int64)
        labels1[0, 0, 0] = 1
        logits = np.zeros((1, 2, h, w))
        logits[0, 1, 0, 0] = 10.0
        base, _ = losses._masked_cross_entropy(ag.Tensor(logits), labels1, labels1 >= 0)
        logits2 = logits.copy()
        logits2[0, 0, 1, 1] = -55.0  # ignored point, must not matter
        perturbed, _ = losses._masked_cross_entropy(ag.Tensor(logits2), labels1,
                                                    labels1 >= 0)
        assert base.item() == perturbed.item()

    def test_empty_cls1_support_flags_batch(self):
        labels1 = np.full((1, 2, 2), -1, dtype=np.int64)
        labels2 = np.zeros((1, 2, 2), dtype=np.int64)
        loss, degenerate = losses.classification_loss(
            ag.Tensor(np.zeros((1, 2, 2, 2))), ag.Tensor(np.zeros((1, 2, 2, 2))),
            ag.Tensor(np.full((1, 1, 2, 2), 0.5)), labels1, labels2,
            np.zeros((1, 2, 2)), W)
        assert degenerate


class TestRegressionLoss:
    def _setup(self):
        # one positive point with a known anchor
        anchors = np.zeros((1, 4, 2, 2))
        anchors[0] = np.array([20.0, 20.0, 10.0, 10.0])[:, None, None]
        cls1 = np.zeros((1, 2, 2), dtype=np.int64)
        cls1[0, 0, 0] = 1
        gt = CornerBox(15, 15, 25, 25)  # equals the anchor box
        refine = np.zeros((1, 4, 2, 2))
        return anchors, cls1, gt, refine

    def test_exact_refinement_gives_zero(self):
        anchors, cls1, gt, refine = self._setup()
        loc = ag.Tensor(np.zeros((1, 4, 2, 2)))
        loss, deg = losses.regression_loss(loc, anchors, gt.as_array()[None],
                                           refine, cls1, W)
        assert loss.item() == pytest.approx(0.0, abs=1e-12) and not deg

    def test_smooth_l1_quadratic_branch(self):
        anchors, cls1, gt, refine = self._setup()
        loc_data = np.zeros((1, 4, 2, 2))
        loc_data[0, 0, 0, 0] = 0.5
        pos = (cls1 == 1).astype(float)
        term = losses._smooth_l1_node(ag.Tensor(loc_data), refine, pos, 1.0, 1.0)
        assert term.item() == pytest.approx(0.125)

    def test_disjoint_prediction_contributes_full_iou_loss(self):
        anchors, cls1, gt, refine = self._setup()
        loc_data = np.zeros((1, 4, 2, 2))
        loc_data[0, 0, 0, 0] = 10.0  # shift center 100 px right: disjoint
        pos = (cls1 == 1).astype(float)
        term = losses._iou_loss_node(ag.Tensor(loc_data), anchors,
                                     gt.as_array()[None], pos, 1.0)
        assert term.item() == pytest.approx(1.0)

    def test_iou_term_translation_invariant(self):
        anchors, cls1, gt, refine = self._setup()
        loc = ag.Tensor(np.full((1, 4, 2, 2), 0.2))
        pos = (cls1 == 1).astype(float)
        base = losses._iou_loss_node(loc, anchors, gt.as_array()[None], pos, 1.0).item()
        shifted_anchors = anchors.copy()
        shifted_anchors[0, 0] += 7.0
        shifted_anchors[0, 1] += 3.0
        shifted_gt = CornerBox(gt.x1 + 7, gt.y1 + 3, gt.x2 + 7, gt.y2 + 3)
        moved = losses._iou_loss_node(loc, shifted_anchors,
                                      shifted_gt.as_array()[None], pos, 1.0).item()
        assert base == pytest.approx(moved, abs=1e-12)

    def test_no_positives_flags_batch(self):
        anchors, _, gt, refine = self._setup()
        cls1 = np.zeros((1, 2, 2), dtype=np.int64)
        loss, degenerate = losses.regression_loss(
            ag.Tensor(np.zeros((1, 4, 2, 2))), anchors, gt.as_array()[None],
            refine, cls1, W)
        assert loss.item() == 0.0 and degenerate

    def test_perturbation_outside_positives_ignored(self):
        anchors, cls1, gt, refine = self._setup()
        loc_a = np.full((1, 4, 2, 2), 0.1)
        loc_b = loc_a.copy()
        loc_b[0, :, 1, 1] = 9.0  # not a positive point
        la, _ = losses.regression_loss(ag.Tensor(loc_a), anchors,
                                       gt.as_array()[None], refine, cls1, W)
        lb, _ = losses.regression_loss(ag.Tensor(loc_b), anchors,
                                       gt.as_array()[None], refine, cls1, W)
        assert la.item() == lb.item()


class TestTotalLoss:
    def test_all_zero_components(self):
        zero = ag.Tensor(np.asarray(0.0))
        assert losses.total_loss(zero, zero, zero, W).item() == 0.0

    def test_degenerate_weights_reduce_to_apn(self):
        weights = LossWeights(lambda_1=0.0, lambda_2=0.0)
        apn = ag.Tensor(np.asarray(3.25))
        cls = ag.Tensor(np.asarray(7.0))
        loc = ag.Tensor(np.asarray(9.0))
        assert losses.total_loss(apn, cls, loc, weights).item() == 3.25

    def test_worked_sum(self):
        apn = ag.Tensor(np.asarray(4.0))
        cls = ag.Tensor(np.asarray(0.6931))
        loc = ag.Tensor(np.asarray(0.125))
        total = losses.total_loss(apn, cls, loc, W)
        assert total.item() == pytest.approx(4.8181)

    def test_nonfinite_component_named(self):
        apn = ag.Tensor(np.asarray(1.0))
        cls = ag.Tensor(np.asarray(1.0))
        loc = ag.Tensor(np.asarray(1.0))
        cls.data = np.asarray(np.nan)  # simulate corruption past the guard
        with pytest.raises(TrainingError) as err:
            losses.total_loss(apn, cls, loc, W)
        assert "cls" in str(err.value)


class TestLossGradients:
    def test_total_loss_matches_finite_differences(self):
        from apntrack.gradcheck import check_gradients
        from apntrack.network import TrackNet

        rng = np.random.default_rng(11)
        net = TrackNet(tiny_model(), seed=1)
        cfg = RunConfig()
        tpl = ag.Tensor(rng.uniform(-0.5, 0.5, (2, 3, 32, 32)))
        srch = ag.Tensor(rng.uniform(-0.5, 0.5, (2, 3, 48, 48)))
        gts = [CornerBox(16, 14, 34, 32), CornerBox(20, 20, 30, 34)]
        geom = net.grid_geometry()
        out0 = net.full_forward(tpl, srch)
        labels = build_batch_labels(geom, out0.anchor_map.data, gts, cfg.labels)
        gt_corners = np.stack([g.as_array() for g in gts])

        def loss_builder():
            o = net.full_forward(tpl, srch)
            la, _ = losses.apn_loss(o.anchor_map, labels["apn_targets"],
                                    labels["quality_mask"])
            lc, _ = losses.classification_loss(
                o.cls1, o.cls2, o.cls3, labels["cls1"], labels["cls2"],
                labels["cls3"], cfg.loss)
            ll, _ = losses.regression_loss(o.loc, labels["anchors"], gt_corners,
                                           labels["refine_targets"], labels["cls1"],
                                           cfg.loss)
            return losses.total_loss(la, lc, ll, cfg.loss)

        sample = [(n, p) for n, p in net.named_parameters()
                  if n.split(".")[0] in ("apn", "fusion", "heads")]
        err, failures = check_gradients(loss_builder, sample,
                                        np.random.default_rng(12),
                                        samples_per_param=2)
        assert not failures, failures[:4]
        assert err < 1e-4
