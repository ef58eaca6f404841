"""Patch cropping and the affine maps between frame and patch coordinates."""

import math

import numpy as np

from .geometry import CornerBox


def context_side(w, h):
    """Square crop side around a w-by-h box including context margin."""
    c = 0.5 * (w + h)
    return math.sqrt((w + c) * (h + c))


def crop_and_resize(frame, center, side, out_size):
    """Bilinear square crop of a (C, H, W) frame, edge-replicated outside."""
    _, fh, fw = frame.shape
    cx, cy = center
    # target pixel centers in frame coordinates
    u = cx - 0.5 * side + (np.arange(out_size) + 0.5) * side / out_size - 0.5
    v = cy - 0.5 * side + (np.arange(out_size) + 0.5) * side / out_size - 0.5
    u = np.clip(u, 0.0, fw - 1.0)
    v = np.clip(v, 0.0, fh - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u1 = np.minimum(u0 + 1, fw - 1)
    v1 = np.minimum(v0 + 1, fh - 1)
    du = (u - u0)[None, None, :]
    dv = (v - v0)[None, :, None]
    tl = frame[:, v0[:, None], u0[None, :]]
    tr = frame[:, v0[:, None], u1[None, :]]
    bl = frame[:, v1[:, None], u0[None, :]]
    br = frame[:, v1[:, None], u1[None, :]]
    top = tl * (1.0 - du) + tr * du
    bot = bl * (1.0 - du) + br * du
    return top * (1.0 - dv) + bot * dv


def box_frame_to_patch(box, center, side, out_size):
    """Map a frame-coordinate box into the coordinates of a crop."""
    scale = out_size / side
    ox = center[0] - 0.5 * side
    oy = center[1] - 0.5 * side
    return CornerBox(
        (box.x1 - ox) * scale, (box.y1 - oy) * scale,
        (box.x2 - ox) * scale, (box.y2 - oy) * scale,
    )


def box_patch_to_frame(box, center, side, out_size):
    """Inverse of box_frame_to_patch."""
    scale = side / out_size
    ox = center[0] - 0.5 * side
    oy = center[1] - 0.5 * side
    return CornerBox(
        box.x1 * scale + ox, box.y1 * scale + oy,
        box.x2 * scale + ox, box.y2 * scale + oy,
    )


def normalize_patch(patch):
    """Map raw 0..255 intensities to the network's [-0.5, 0.5] range."""
    return patch / 255.0 - 0.5
