"""Synthetic moving-object scenes standing in for large video datasets.

A scene is a textured static background plus one rigid object
(rectangle or ellipse) following a constant-velocity path with optional
per-frame jitter, scale drift, and a partial occluder. Every frame is a
pure function of (scene, t), so sequences and training pairs are
bit-reproducible from the scene seed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import LabelError
from .geometry import CornerBox
from .patches import box_frame_to_patch, context_side, crop_and_resize

MIN_OBJECT_SIDE = 4.0


@dataclass
class SyntheticScene:
    frame_height: int = 192
    frame_width: int = 192
    shape: str = "rectangle"  # or "ellipse"
    color: tuple = (205.0, 90.0, 60.0)
    appearance_noise: float = 6.0
    background_cells: int = 8
    start_center: tuple = (96.0, 96.0)
    velocity: tuple = (0.0, 0.0)
    jitter: float = 0.0
    object_size: tuple = (36.0, 28.0)
    scale_drift: float = 1.0
    occluder_fraction: float = 0.0
    occluder_color: tuple = (60.0, 60.0, 200.0)
    seed: int = 0


@dataclass
class TrainingPair:
    template: np.ndarray  # (3, T, T) raw intensities
    search: np.ndarray    # (3, S, S) raw intensities
    gt: CornerBox         # ground truth in search-patch coordinates


def object_state(scene, t):
    """Center and size of the object at frame t, clamped inside the frame."""
    rng = np.random.default_rng([scene.seed, 7, t])
    jx, jy = (rng.normal(0.0, scene.jitter, 2) if scene.jitter > 0 else (0.0, 0.0))
    w = scene.object_size[0] * scene.scale_drift ** t
    h = scene.object_size[1] * scene.scale_drift ** t
    w = min(max(w, MIN_OBJECT_SIDE), scene.frame_width - 2.0)
    h = min(max(h, MIN_OBJECT_SIDE), scene.frame_height - 2.0)
    cx = scene.start_center[0] + scene.velocity[0] * t + jx
    cy = scene.start_center[1] + scene.velocity[1] * t + jy
    cx = min(max(cx, 0.5 * w + 1.0), scene.frame_width - 0.5 * w - 1.0)
    cy = min(max(cy, 0.5 * h + 1.0), scene.frame_height - 0.5 * h - 1.0)
    return (cx, cy), (w, h)


def _background(scene):
    rng = np.random.default_rng([scene.seed, 11])
    cells = scene.background_cells
    coarse = rng.uniform(40.0, 180.0, (3, cells, cells))
    reps_h = int(math.ceil(scene.frame_height / cells))
    reps_w = int(math.ceil(scene.frame_width / cells))
    tiled = np.repeat(np.repeat(coarse, reps_h, axis=1), reps_w, axis=2)
    return tiled[:, : scene.frame_height, : scene.frame_width]


def render_frame(scene, t, with_masks=False):
    """Render frame t; returns (frame (3,H,W), gt box) and optional masks."""
    frame = _background(scene).copy()
    (cx, cy), (w, h) = object_state(scene, t)
    ys = np.arange(scene.frame_height)[:, None] + 0.5
    xs = np.arange(scene.frame_width)[None, :] + 0.5
    if scene.shape == "ellipse":
        obj = ((xs - cx) / (0.5 * w)) ** 2 + ((ys - cy) / (0.5 * h)) ** 2 <= 1.0
    elif scene.shape == "rectangle":
        obj = (np.abs(xs - cx) <= 0.5 * w) & (np.abs(ys - cy) <= 0.5 * h)
    else:
        raise ValueError(f"unknown object shape '{scene.shape}'")

    rng = np.random.default_rng([scene.seed, 13, t])
    color = np.asarray(scene.color, dtype=np.float64)
    for c in range(3):
        frame[c][obj] = color[c]
    if scene.appearance_noise > 0:
        noise = rng.normal(0.0, scene.appearance_noise, frame.shape)
        frame += noise * obj[None, :, :]

    occluded = np.zeros_like(obj)
    if scene.occluder_fraction > 0:
        # centered vertical band over the object; for both supported
        # shapes a band of relative width f covers at least fraction f
        half = 0.5 * scene.occluder_fraction * w
        band = (np.abs(xs - cx) <= half) & (np.abs(ys - cy) <= 0.5 * h)
        occluded = band & obj
        occ_color = np.asarray(scene.occluder_color, dtype=np.float64)
        for c in range(3):
            frame[c][band] = occ_color[c]

    np.clip(frame, 0.0, 255.0, out=frame)
    gt = CornerBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    if with_masks:
        return frame, gt, obj, occluded
    return frame, gt


def generate_pair(scene, frame_gap=0, t=0, center_jitter=0.0,
                  template_size=64, search_size=96, rng=None):
    """Template/search crops around frames t and t+frame_gap.

    The search crop is centered on the object's new position plus a
    uniform jitter of up to center_jitter pixels per axis, emulating an
    imperfect previous-frame estimate. Deterministic when rng is seeded
    (or omitted: a generator derived from the scene seed is used).
    """
    if frame_gap < 0:
        raise ValueError("frame_gap must be non-negative")
    if rng is None:
        rng = np.random.default_rng([scene.seed, 17, t, frame_gap])

    frame_t, gt_t = render_frame(scene, t)
    t_side = context_side(gt_t.width, gt_t.height)
    template = crop_and_resize(frame_t, gt_t.center, t_side, template_size)

    frame_s, gt_s = render_frame(scene, t + frame_gap)
    off = rng.uniform(-center_jitter, center_jitter, 2) if center_jitter > 0 else (0.0, 0.0)
    s_center = (gt_s.center[0] + off[0], gt_s.center[1] + off[1])
    s_side = context_side(gt_s.width, gt_s.height) * (search_size / template_size)
    search = crop_and_resize(frame_s, s_center, s_side, search_size)
    gt_patch = box_frame_to_patch(gt_s, s_center, s_side, search_size)
    if gt_patch.width < 2.0 or gt_patch.height < 2.0:
        raise LabelError(f"object degenerate in search patch: {gt_patch}")
    return TrainingPair(template=template, search=search, gt=gt_patch)


def random_scene(rng, cfg):
    """Draw a scene from the training distribution in cfg (a SceneConfig)."""
    w = rng.uniform(cfg.min_object, cfg.max_object)
    h = rng.uniform(cfg.min_object, cfg.max_object)
    margin = 0.5 * max(w, h) + 4.0
    return SyntheticScene(
        frame_height=cfg.frame_height,
        frame_width=cfg.frame_width,
        shape="rectangle" if rng.random() < 0.5 else "ellipse",
        color=tuple(rng.uniform(120.0, 255.0, 3)),
        appearance_noise=cfg.appearance_noise,
        start_center=(
            rng.uniform(margin, cfg.frame_width - margin),
            rng.uniform(margin, cfg.frame_height - margin),
        ),
        velocity=tuple(rng.uniform(-cfg.max_velocity, cfg.max_velocity, 2)),
        jitter=cfg.jitter,
        object_size=(w, h),
        scale_drift=float(rng.uniform(0.995, 1.005)),
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def render_sequence(scene, num_frames):
    """Frames and ground-truth boxes for t = 0 .. num_frames-1."""
    frames, boxes = [], []
    for t in range(num_frames):
        frame, gt = render_frame(scene, t)
        frames.append(frame)
        boxes.append(gt)
    return frames, boxes


def write_sequence(directory, scene, num_frames, attributes=None):
    """Save PNG frames plus groundtruth.txt (x,y,w,h per line)."""
    import json
    from pathlib import Path

    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames, boxes = render_sequence(scene, num_frames)
    for idx, frame in enumerate(frames):
        img = np.clip(frame, 0, 255).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(img).save(directory / f"{idx + 1:06d}.png")
    with open(directory / "groundtruth.txt", "w", encoding="utf-8") as fh:
        for b in boxes:
            fh.write(f"{b.x1:.3f},{b.y1:.3f},{b.width:.3f},{b.height:.3f}\n")
    if attributes is not None:
        with open(directory / "attributes.json", "w", encoding="utf-8") as fh:
            json.dump({"attributes": list(attributes)}, fh)
    return frames, boxes
