"""Online tracking loop: initialize from the first frame's box, then per
frame crop a search region, run the network, fuse the classification
maps, and decode the refined box.

Ground truth beyond the initial box is never consulted; sequences are
scored afterwards by the evaluation harness (one-pass protocol).
"""

import time
from dataclasses import dataclass

import numpy as np

from .autograd import Tensor
from .errors import LabelError
from .geometry import CenterBox, CornerBox
from .labels import apply_refinement, decode_anchor
from .patches import box_patch_to_frame, context_side, crop_and_resize, normalize_patch

MIN_BOX_SIDE = 2.0


@dataclass
class TrackerState:
    template_cache: dict      # adjusted template features, computed once
    box: CenterBox            # current estimate in frame coordinates
    frame_size: tuple         # (height, width)
    confidence: float = 1.0
    last_cell: tuple = None   # (j, i) grid cell chosen by the last update


@dataclass
class TrackResult:
    boxes: list               # CornerBox per frame, index 0 echoes the init box
    frame_seconds: list

    @property
    def fps(self):
        total = sum(self.frame_seconds)
        return len(self.frame_seconds) / total if total > 0 else 0.0


def fuse_scores(cls1, cls2, cls3, cfg):
    """Geometric weighted product of the three classification maps.

    cls1/cls2 are (2, h, w) logits, cls3 is (1, h, w) in (0, 1); returns
    an (h, w) score map. The argmax is invariant to positive rescaling.
    """
    p1 = _softmax_fg(cls1)
    p2 = _softmax_fg(cls2)
    p3 = cls3[0]
    return (p1 ** cfg.alpha_cls1) * (p2 ** cfg.alpha_cls2) * (p3 ** cfg.alpha_cls3)


def _softmax_fg(logits):
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e[1] / e.sum(axis=0)


def cosine_window(h, w):
    wy = np.hanning(h + 2)[1:-1]
    wx = np.hanning(w + 2)[1:-1]
    return np.outer(wy, wx)


class Tracker:
    def __init__(self, network, cfg, label_cfg=None):
        self.network = network
        self.cfg = cfg
        self.min_anchor = label_cfg.min_anchor_size if label_cfg is not None else 1e-3
        self.geom = network.grid_geometry()
        self.window = cosine_window(self.geom.h, self.geom.w)

    def init(self, frame, box):
        """Cache template features from the first frame's box."""
        _, fh, fw = frame.shape
        if box.width < MIN_BOX_SIDE or box.height < MIN_BOX_SIDE:
            raise LabelError(f"degenerate init box: {box}")
        if box.x1 < 0 or box.y1 < 0 or box.x2 > fw or box.y2 > fh:
            raise LabelError(f"init box {box} outside {fw}x{fh} frame")
        side = context_side(box.width, box.height)
        patch = crop_and_resize(frame, box.center, side, self.network.cfg.template_size)
        cache = self.network.make_template_cache(Tensor(normalize_patch(patch)[None]))
        return TrackerState(template_cache=cache, box=box.to_center(),
                            frame_size=(fh, fw))

    def update(self, state, frame):
        """Estimate the box in a new frame; returns (CornerBox, confidence)."""
        cfg = self.cfg
        net_cfg = self.network.cfg
        center = (state.box.cx, state.box.cy)
        side = context_side(state.box.w, state.box.h) \
            * (net_cfg.search_size / net_cfg.template_size)
        patch = crop_and_resize(frame, center, side, net_cfg.search_size)
        out = self.network.forward_search(Tensor(normalize_patch(patch)[None]),
                                          state.template_cache)

        fused = fuse_scores(out.cls1.data[0], out.cls2.data[0], out.cls3.data[0], cfg)
        score = fused * ((1.0 - cfg.window_influence)
                         + cfg.window_influence * self.window)
        if not np.any(score > 0):
            state.confidence = 0.0
            return state.box.to_corner(), 0.0
        j, i = np.unravel_index(np.argmax(score), score.shape)
        state.last_cell = (int(j), int(i))

        anchor = decode_anchor(self.geom, i, j, out.anchor_map.data[0, :, j, i],
                               self.min_anchor)
        refined = apply_refinement(anchor, out.loc.data[0, :, j, i])
        in_frame = box_patch_to_frame(refined, center, side, net_cfg.search_size)

        # smoothness prior on scale: bound the per-frame size ratio, then
        # blend toward the prediction
        step = cfg.max_scale_step
        pred_w = min(max(in_frame.width, state.box.w / step), state.box.w * step)
        pred_h = min(max(in_frame.height, state.box.h / step), state.box.h * step)
        damp = cfg.scale_damping
        new_w = damp * state.box.w + (1.0 - damp) * pred_w
        new_h = damp * state.box.h + (1.0 - damp) * pred_h
        cx, cy = in_frame.center
        state.box = self._clamp(cx, cy, new_w, new_h, state.frame_size)
        state.confidence = float(score[j, i])
        return state.box.to_corner(), state.confidence

    @staticmethod
    def _clamp(cx, cy, w, h, frame_size):
        fh, fw = frame_size
        w = min(max(w, MIN_BOX_SIDE), fw)
        h = min(max(h, MIN_BOX_SIDE), fh)
        cx = min(max(cx, 0.5 * w), fw - 0.5 * w)
        cy = min(max(cy, 0.5 * h), fh - 0.5 * h)
        return CenterBox(cx, cy, w, h)

    def run_sequence(self, frames, init_box):
        """One-pass run: init on the first frame, update on the rest.

        frames is a sequence of (3, H, W) arrays or loader callables;
        per-frame wall-clock times are recorded for throughput reporting.
        """
        if len(frames) == 0:
            raise ValueError("empty sequence")
        boxes = []
        times = []
        t0 = time.perf_counter()
        state = self.init(_materialize(frames[0], 0), init_box)
        boxes.append(init_box)
        times.append(time.perf_counter() - t0)
        for idx, frame in enumerate(frames[1:], start=1):
            t0 = time.perf_counter()
            box, _ = self.update(state, _materialize(frame, idx))
            boxes.append(box)
            times.append(time.perf_counter() - t0)
        return TrackResult(boxes=boxes, frame_seconds=times)


def _materialize(frame, index):
    if not callable(frame):
        return frame
    try:
        return frame()
    except Exception as exc:
        raise RuntimeError(f"failed to load frame {index}: {exc}") from exc
