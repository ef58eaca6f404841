"""Training objectives.

Every loss is a scalar graph node with a hand-derived backward pass,
mean-normalized over its own support so magnitudes are independent of
batch and map size. Losses whose support is empty evaluate to 0 and
report the batch as degenerate.
"""

import numpy as np

from . import autograd as ag
from .errors import TrainingError


def _scalar_node(value, parent, grad_fn):
    def backward_fn(gy):
        return (grad_fn(float(gy)),)
    return ag.Tensor._from_op(np.asarray(float(value)), (parent,), backward_fn)


def _zero_node(parent):
    return _scalar_node(0.0, parent, lambda gy: np.zeros_like(parent.data))


def apn_loss(anchor_map, targets, mask):
    """Quality-masked L1 between the offset map and its targets.

    anchor_map is a (B, 4, h, w) tensor; targets matches; mask is
    (B, h, w) in {0, 1}. The sum of the four absolute offset errors is
    averaged over the masked-in points. Returns (loss, degenerate).
    """
    m = mask[:, None, :, :]
    count = float(mask.sum())
    if count == 0:
        return _zero_node(anchor_map), True
    diff = anchor_map.data - targets

    def grad_fn(gy):
        return gy * np.sign(diff) * m / count

    value = float((np.abs(diff) * m).sum() / count)
    return _scalar_node(value, anchor_map, grad_fn), False


def _masked_cross_entropy(logits, labels, support):
    """Two-class cross entropy averaged over support points."""
    n = float(support.sum())
    if n == 0:
        return _zero_node(logits), True
    x = logits.data
    z = x - x.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    idx = np.clip(labels, 0, 1)[:, None, :, :]
    picked = np.take_along_axis(logp, idx, axis=1)[:, 0]
    value = float(-(picked * support).sum() / n)

    def grad_fn(gy):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, idx, 1.0, axis=1)
        return gy * (p - onehot) * support[:, None, :, :] / n

    return _scalar_node(value, logits, grad_fn), False


def _masked_bce(probs, targets, support):
    """Binary cross entropy on already-squashed probabilities."""
    n = float(support.sum())
    if n == 0:
        return _zero_node(probs), True
    eps = 1e-7
    p = probs.data[:, 0]
    pc = np.clip(p, eps, 1.0 - eps)
    value = float(-(support * (targets * np.log(pc)
                               + (1.0 - targets) * np.log(1.0 - pc))).sum() / n)

    def grad_fn(gy):
        gate = (p > eps) & (p < 1.0 - eps)
        dp = (-(targets / pc) + (1.0 - targets) / (1.0 - pc)) * support * gate / n
        return gy * dp[:, None, :, :]

    return _scalar_node(value, probs, grad_fn), False


def classification_loss(cls1, cls2, cls3, cls1_labels, cls2_labels, cls3_targets, weights):
    """Weighted sum of the three branch losses.

    Branch 1: cross entropy over assigned (positive or negative) points,
    ignores excluded. Branch 2: cross entropy over every point. Branch 3:
    binary cross entropy against centerness over points inside the gt.
    Returns (loss, degenerate) where degenerate means branch 1 had no
    assigned points.
    """
    ce1, deg = _masked_cross_entropy(cls1, cls1_labels, cls1_labels >= 0)
    ce2, _ = _masked_cross_entropy(
        cls2, cls2_labels, np.ones(cls2_labels.shape, dtype=bool))
    bce3, _ = _masked_bce(cls3, cls3_targets, cls2_labels == 1)
    total = ag.add(ag.add(ag.scale(ce1, weights.lambda_cls1),
                          ag.scale(ce2, weights.lambda_cls2)),
                   ag.scale(bce3, weights.lambda_cls3))
    return total, deg


def _smooth_l1_node(loc, refine_targets, pos, n, delta):
    d = loc.data - refine_targets
    absd = np.abs(d)
    quad = absd < delta
    per = np.where(quad, 0.5 * d * d / delta, absd - 0.5 * delta)
    value = float((per.sum(axis=1) * pos).sum() / n)

    def grad_fn(gy):
        return gy * np.where(quad, d / delta, np.sign(d)) * pos[:, None, :, :] / n

    return _scalar_node(value, loc, grad_fn)


def _iou_loss_node(loc, anchors, gt_corners, pos, n, exp_clip=10.0):
    """Mean (1 - IoU) between refined boxes and the gt over positive points."""
    pcx, pcy, pw, ph = (anchors[:, k] for k in range(4))
    l0, l1, l2, l3 = (loc.data[:, k] for k in range(4))
    gate2 = (np.abs(l2) < exp_clip).astype(np.float64)
    gate3 = (np.abs(l3) < exp_clip).astype(np.float64)
    w = pw * np.exp(np.clip(l2, -exp_clip, exp_clip))
    h = ph * np.exp(np.clip(l3, -exp_clip, exp_clip))
    cx = pcx + l0 * pw
    cy = pcy + l1 * ph
    x1, x2 = cx - 0.5 * w, cx + 0.5 * w
    y1, y2 = cy - 0.5 * h, cy + 0.5 * h

    gx1, gy1, gx2, gy2 = (gt_corners[:, k][:, None, None] for k in range(4))
    ix1 = np.maximum(x1, gx1)
    ix2 = np.minimum(x2, gx2)
    iy1 = np.maximum(y1, gy1)
    iy2 = np.minimum(y2, gy2)
    iw = ix2 - ix1
    ih = iy2 - iy1
    has = (iw > 0) & (ih > 0)
    inter = np.where(has, iw * ih, 0.0)
    area_p = w * h
    area_g = (gx2 - gx1) * (gy2 - gy1)
    union = area_p + area_g - inter
    iou_map = inter / union
    value = float(((1.0 - iou_map) * pos).sum() / n)

    def grad_fn(gy):
        factor = gy * pos / n
        # dI/d(corner), zero when there is no overlap
        di_x1 = np.where(has, -ih * (x1 >= gx1), 0.0)
        di_x2 = np.where(has, ih * (x2 <= gx2), 0.0)
        di_y1 = np.where(has, -iw * (y1 >= gy1), 0.0)
        di_y2 = np.where(has, iw * (y2 <= gy2), 0.0)
        da_x1, da_x2 = -h, h
        da_y1, da_y2 = -w, w
        u2 = union * union

        def corner(di, da):
            # d(1-IoU)/dq = -(di*(U+I) - I*da)/U^2
            return -factor * (di * (union + inter) - inter * da) / u2

        lx1 = corner(di_x1, da_x1)
        lx2 = corner(di_x2, da_x2)
        ly1 = corner(di_y1, da_y1)
        ly2 = corner(di_y2, da_y2)
        g0 = (lx1 + lx2) * pw
        g1 = (ly1 + ly2) * ph
        g2 = (lx2 - lx1) * 0.5 * w * gate2
        g3 = (ly2 - ly1) * 0.5 * h * gate3
        return np.stack([g0, g1, g2, g3], axis=1)

    return _scalar_node(value, loc, grad_fn)


def regression_loss(loc, anchors, gt_corners, refine_targets, cls1_labels, weights):
    """Refinement loss at positive points: IoU term plus smooth L1 term.

    loc is the (B, 4, h, w) head output; anchors the decoded proposals
    (B, 4, h, w) in center form, treated as constants; gt_corners is
    (B, 4). Returns (loss, degenerate).
    """
    pos = (cls1_labels == 1).astype(np.float64)
    n = float(pos.sum())
    if n == 0:
        return _zero_node(loc), True
    iou_term = _iou_loss_node(loc, anchors, gt_corners, pos, n)
    sl1_term = _smooth_l1_node(loc, refine_targets, pos, n, weights.smooth_l1_delta)
    total = ag.add(ag.scale(iou_term, weights.lambda_loc1),
                   ag.scale(sl1_term, weights.lambda_loc2))
    return total, False


def total_loss(apn, cls, loc, weights):
    """Weighted sum of the three stage losses."""
    for name, component in (("apn", apn), ("cls", cls), ("loc", loc)):
        if not np.all(np.isfinite(component.data)):
            raise TrainingError(f"loss component '{name}' is non-finite")
    return ag.add(apn, ag.add(ag.scale(cls, weights.lambda_1),
                              ag.scale(loc, weights.lambda_2)))
