"""Axis-aligned box algebra and the feature-cell to pixel grid mapping."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class CornerBox:
    """Box as (x1, y1, x2, y2) pixel corners, x1 <= x2 and y1 <= y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"inverted box: {self}")

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def to_center(self):
        cx, cy = self.center
        return CenterBox(cx, cy, self.width, self.height)

    def as_array(self):
        return np.array([self.x1, self.y1, self.x2, self.y2])


@dataclass(frozen=True)
class CenterBox:
    """Box as center plus positive width/height in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"non-positive box size: {self}")

    def to_corner(self):
        return CornerBox(
            self.cx - 0.5 * self.w, self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w, self.cy + 0.5 * self.h,
        )

    def as_array(self):
        return np.array([self.cx, self.cy, self.w, self.h])


@dataclass(frozen=True)
class GridGeometry:
    """Search-patch size, total stride, and feature-map size.

    Cell (i, j) maps to the pixel at the center of its receptive field:
    p_i = w_s/2 + (i - w/2) * s, and analogously for rows.
    """

    w_s: int
    h_s: int
    s: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1 or self.s < 1:
            raise ConfigError(f"invalid grid geometry: {self}")
        for lo, hi, bound in (
            (self.point_x(0), self.point_x(self.w - 1), self.w_s),
            (self.point_y(0), self.point_y(self.h - 1), self.h_s),
        ):
            if lo < 0 or hi > bound:
                raise ConfigError(f"grid points fall outside the patch: {self}")

    def point_x(self, i):
        return self.w_s / 2.0 + (i - self.w / 2.0) * self.s

    def point_y(self, j):
        return self.h_s / 2.0 + (j - self.h / 2.0) * self.s

    def points(self):
        """Pixel coordinates of all cells: (px of shape (w,), py of shape (h,))."""
        px = self.w_s / 2.0 + (np.arange(self.w) - self.w / 2.0) * self.s
        py = self.h_s / 2.0 + (np.arange(self.h) - self.h / 2.0) * self.s
        return px, py


def grid_point(geom, i, j):
    """Pixel location of feature cell (i, j); i indexes columns, j rows."""
    if not (0 <= i < geom.w and 0 <= j < geom.h):
        raise IndexError(f"cell ({i}, {j}) outside {geom.w}x{geom.h} map")
    return geom.point_x(i), geom.point_y(j)


def iou(a, b):
    """Intersection over union of two corner boxes; 0 for a degenerate union."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_arrays(x1, y1, x2, y2, g):
    """Vectorized IoU of component arrays against a single CornerBox g."""
    iw = np.minimum(x2, g.x2) - np.maximum(x1, g.x1)
    ih = np.minimum(y2, g.y2) - np.maximum(y1, g.y1)
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    union = (x2 - x1) * (y2 - y1) + g.area - inter
    out = np.zeros_like(inter)
    ok = union > 0
    out[ok] = inter[ok] / union[ok]
    return out


def cle(a, b):
    """Center location error: Euclidean distance between box centers."""
    ax, ay = a.center
    bx, by = b.center
    return math.hypot(ax - bx, ay - by)
