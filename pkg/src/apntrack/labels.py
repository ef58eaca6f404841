"""Training-label generation for both regression stages and all three
classification branches.

Maps are laid out (channel, h, w) and indexed [c, j, i]: j is the row
(y direction), i the column (x direction), matching the grid mapping in
geometry. Grid points outside the ground truth produce signed (negative)
first-stage targets; nothing is clipped here.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LabelError
from .geometry import CenterBox, CornerBox, iou_arrays


@dataclass
class LabelBundle:
    """Per-grid-point labels for one ground-truth box."""

    apn_targets: np.ndarray     # (4, h, w) signed corner distances
    quality_mask: np.ndarray    # (h, w) in {0, 1}
    refine_targets: np.ndarray  # (4, h, w) center ratios and log size ratios
    cls1_labels: np.ndarray     # (h, w) in {1 pos, 0 neg, -1 ignore}
    cls2_labels: np.ndarray     # (h, w) in {1 inside, 0 outside}
    cls3_labels: np.ndarray     # (h, w) centerness in [0, 1]
    anchors: np.ndarray         # (4, h, w) decoded proposals, center form


def _grid_xy(geom):
    px, py = geom.points()
    return px[None, :], py[:, None]  # broadcast to (h, w)


def _check_gt(g):
    if g.width <= 0 or g.height <= 0:
        raise LabelError(f"degenerate ground-truth box: {g}")


def apn_regression_labels(geom, g):
    """Signed distances from each grid point to the four gt edges, (4, h, w)."""
    _check_gt(g)
    px, py = _grid_xy(geom)
    zeros = np.zeros((geom.h, geom.w))
    return np.stack([
        px - g.x1 + zeros,
        py - g.y1 + zeros,
        g.x2 - px + zeros,
        g.y2 - py + zeros,
    ])


def quality_mask(geom, g, area_ratio=2.0):
    """1 on grid points inside the gt box scaled about its center, else 0.

    The scaled region keeps the gt center and aspect ratio; its area is
    area_ratio times larger, i.e. each side grows by sqrt(area_ratio).
    Boundary points count as inside.
    """
    _check_gt(g)
    if area_ratio <= 1.0:
        raise ValueError(f"area_ratio must exceed 1, got {area_ratio}")
    px, py = _grid_xy(geom)
    cx, cy = g.center
    scale = np.sqrt(area_ratio)
    half_w = 0.5 * g.width * scale
    half_h = 0.5 * g.height * scale
    inside = (np.abs(px - cx) <= half_w) & (np.abs(py - cy) <= half_h)
    return inside.astype(np.float64)


def decode_anchor_map(geom, offsets, min_size=1e-3):
    """Turn the (4, h, w) offset map into proposal boxes in center form.

    Offsets are distances from each grid point to the proposal corners;
    widths and heights are clamped to min_size before later divisions
    and logs.
    """
    px, py = _grid_xy(geom)
    x1 = px - offsets[0]
    y1 = py - offsets[1]
    x2 = px + offsets[2]
    y2 = py + offsets[3]
    return np.stack([
        0.5 * (x1 + x2),
        0.5 * (y1 + y2),
        np.maximum(x2 - x1, min_size),
        np.maximum(y2 - y1, min_size),
    ])


def decode_anchor(geom, i, j, offsets, min_size=1e-3):
    """Single-point variant of decode_anchor_map returning a CenterBox."""
    px = geom.point_x(i)
    py = geom.point_y(j)
    x1, y1 = px - offsets[0], py - offsets[1]
    x2, y2 = px + offsets[2], py + offsets[3]
    return CenterBox(0.5 * (x1 + x2), 0.5 * (y1 + y2),
                     max(x2 - x1, min_size), max(y2 - y1, min_size))


def encode_refinement(anchors, g):
    """Second-stage targets: center deltas over anchor size, log size ratios.

    anchors is (4, ...) in center form; g is the gt CenterBox.
    """
    if g.w <= 0 or g.h <= 0:
        raise LabelError(f"non-positive ground-truth size: {g}")
    pcx, pcy, pw, ph = anchors
    return np.stack([
        (g.cx - pcx) / pw,
        (g.cy - pcy) / ph,
        np.log(g.w / pw),
        np.log(g.h / ph),
    ])


def refine_targets(anchor, g):
    """encode_refinement for a single CenterBox pair, as a 4-vector."""
    return encode_refinement(anchor.as_array().reshape(4, 1), g)[:, 0]


def decode_refinement(anchors, preds, exp_clip=10.0):
    """Inverse of encode_refinement; returns corner components (4, ...)."""
    pcx, pcy, pw, ph = anchors
    cx = pcx + preds[0] * pw
    cy = pcy + preds[1] * ph
    w = pw * np.exp(np.clip(preds[2], -exp_clip, exp_clip))
    h = ph * np.exp(np.clip(preds[3], -exp_clip, exp_clip))
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h])


def apply_refinement(anchor, pred):
    """Refine a single anchor CenterBox with a predicted 4-vector."""
    corners = decode_refinement(anchor.as_array().reshape(4, 1),
                                np.asarray(pred, dtype=np.float64).reshape(4, 1))
    x1, y1, x2, y2 = corners[:, 0]
    return CornerBox(x1, y1, x2, y2)


def centerness(geom, g):
    """Centered-ness of each grid point in the gt box, (h, w) in [0, 1].

    sqrt((min(l,r)/max(l,r)) * (min(t,b)/max(t,b))) over the edge
    distances; 0 where any distance is non-positive. 1 exactly where the
    left/right and top/bottom distances coincide.
    """
    t = apn_regression_labels(geom, g)
    left, top, right, bottom = t
    inside = (left > 0) & (top > 0) & (right > 0) & (bottom > 0)
    out = np.zeros((geom.h, geom.w))
    lr = np.minimum(left, right) / np.maximum(np.maximum(left, right), 1e-12)
    tb = np.minimum(top, bottom) / np.maximum(np.maximum(top, bottom), 1e-12)
    out[inside] = np.sqrt(lr[inside] * tb[inside])
    return out


def classification_labels(geom, anchors, g, iou_pos=0.6, iou_neg=0.3):
    """Branch labels from the decoded proposals and the gt box.

    cls1 marks proposals by IoU with the gt: positive at or above
    iou_pos, negative at or below iou_neg, ignore between; the single
    best-IoU point (first in row-major order on ties) is always forced
    positive. cls2 marks grid points strictly inside the gt. cls3 is the
    centerness target.
    """
    _check_gt(g)
    if iou_neg >= iou_pos:
        raise ValueError(f"iou_neg {iou_neg} must be below iou_pos {iou_pos}")
    pcx, pcy, pw, ph = anchors
    ious = iou_arrays(pcx - 0.5 * pw, pcy - 0.5 * ph,
                      pcx + 0.5 * pw, pcy + 0.5 * ph, g)

    cls1 = np.full((geom.h, geom.w), -1, dtype=np.int64)
    cls1[ious <= iou_neg] = 0
    cls1[ious >= iou_pos] = 1
    best = np.unravel_index(np.argmax(ious), ious.shape)
    cls1[best] = 1

    t = apn_regression_labels(geom, g)
    cls2 = ((t[0] > 0) & (t[1] > 0) & (t[2] > 0) & (t[3] > 0)).astype(np.int64)
    cls3 = centerness(geom, g)
    return cls1, cls2, cls3


def build_label_bundle(geom, anchor_offsets, g, cfg):
    """All labels for one sample given the predicted offset map and gt box."""
    _check_gt(g)
    anchors = decode_anchor_map(geom, anchor_offsets, cfg.min_anchor_size)
    cls1, cls2, cls3 = classification_labels(geom, anchors, g, cfg.iou_pos, cfg.iou_neg)
    return LabelBundle(
        apn_targets=apn_regression_labels(geom, g),
        quality_mask=quality_mask(geom, g, cfg.area_ratio),
        refine_targets=encode_refinement(anchors, g.to_center()),
        cls1_labels=cls1,
        cls2_labels=cls2,
        cls3_labels=cls3,
        anchors=anchors,
    )


def build_batch_labels(geom, anchor_offset_batch, gts, cfg):
    """Stack per-sample bundles for a batch; anchor_offset_batch is (B, 4, h, w)."""
    bundles = [
        build_label_bundle(geom, anchor_offset_batch[k], gts[k], cfg)
        for k in range(len(gts))
    ]
    return {
        "apn_targets": np.stack([b.apn_targets for b in bundles]),
        "quality_mask": np.stack([b.quality_mask for b in bundles]),
        "refine_targets": np.stack([b.refine_targets for b in bundles]),
        "cls1": np.stack([b.cls1_labels for b in bundles]),
        "cls2": np.stack([b.cls2_labels for b in bundles]),
        "cls3": np.stack([b.cls3_labels for b in bundles]),
        "anchors": np.stack([b.anchors for b in bundles]),
    }
