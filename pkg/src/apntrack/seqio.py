"""File formats for sequences, results, and annotations.

Frames: .png/.jpg/.jpeg (RGB or grayscale) or .npy arrays, sorted by
filename. Annotation and result files hold one 'x,y,w,h' line per frame
(top-left corner plus size, pixels); 'NaN,NaN,NaN,NaN' marks frames
without ground truth. Timing sidecars hold one seconds value per line.
"""

import json
import math
from pathlib import Path

import numpy as np

from .geometry import CornerBox

FRAME_SUFFIXES = (".png", ".jpg", ".jpeg", ".npy")


def list_frames(directory):
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in FRAME_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"no frames found in {directory}")
    return paths


def load_frame(path):
    """Load one frame as a (3, H, W) float array of raw intensities."""
    path = Path(path)
    if path.suffix.lower() == ".npy":
        arr = np.asarray(np.load(path), dtype=np.float64)
        if arr.ndim == 3 and arr.shape[0] in (1, 3):
            pass
        elif arr.ndim == 3 and arr.shape[2] in (1, 3):
            arr = arr.transpose(2, 0, 1)
        elif arr.ndim == 2:
            arr = arr[None]
        else:
            raise ValueError(f"{path}: unsupported array shape {arr.shape}")
    else:
        from PIL import Image

        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64).transpose(2, 0, 1)
    if arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    return arr


def parse_box_line(line):
    parts = [p.strip() for p in line.replace("\t", ",").split(",") if p.strip()]
    if len(parts) != 4:
        raise ValueError(f"expected 'x,y,w,h', got {line!r}")
    x, y, w, h = (float(p) for p in parts)
    if any(math.isnan(v) for v in (x, y, w, h)):
        return None
    return CornerBox(x, y, x + w, y + h)


def read_boxes(path):
    """Boxes from an x,y,w,h text file; None for NaN lines."""
    boxes = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                boxes.append(parse_box_line(line))
    return boxes


def write_boxes(path, boxes):
    with open(path, "w", encoding="utf-8") as fh:
        for b in boxes:
            fh.write(f"{b.x1:.4f},{b.y1:.4f},{b.width:.4f},{b.height:.4f}\n")


def read_attributes(path):
    path = Path(path)
    if not path.exists():
        return []
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    tags = data.get("attributes", [])
    if not isinstance(tags, list):
        raise ValueError(f"{path}: 'attributes' must be a list")
    return [str(t) for t in tags]


def write_times(path, seconds):
    with open(path, "w", encoding="utf-8") as fh:
        for s in seconds:
            fh.write(f"{s:.9f}\n")


def read_times(path):
    path = Path(path)
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return [float(line) for line in fh if line.strip()]
