"""Axis-aligned boxes in two encodings, IoU and generalized IoU.

The canonical encoding is pixel corner form (left, top, width, height);
the normalized center form (cx, cy, w, h in [0, 1]) is the view used by
the set-prediction losses. Metrics and MOT files stay pixel-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels


@dataclass(frozen=True)
class Box:
    """Rectangle in pixel corner form. Extents must be non-negative."""

    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    def xyxy(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)

    def to_center(self, image_w: float, image_h: float) -> "CenterBox":
        """Normalized center-form view of this box for the given image size."""
        if image_w <= 0 or image_h <= 0:
            raise ValueError("image size must be positive")
        return CenterBox(
            cx=(self.left + 0.5 * self.width) / image_w,
            cy=(self.top + 0.5 * self.height) / image_h,
            w=self.width / image_w,
            h=self.height / image_h,
        )


@dataclass(frozen=True)
class CenterBox:
    """Rectangle as normalized center coordinates plus width and height."""

    cx: float
    cy: float
    w: float
    h: float

    def to_corner(self, image_w: float, image_h: float) -> Box:
        if image_w <= 0 or image_h <= 0:
            raise ValueError("image size must be positive")
        return Box(
            left=(self.cx - 0.5 * self.w) * image_w,
            top=(self.cy - 0.5 * self.h) * image_h,
            width=self.w * image_w,
            height=self.h * image_h,
        )

    def xyxy(self) -> tuple[float, float, float, float]:
        # Corner coordinates in the normalized unit square.
        return (
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        )


def convert(box: Box | CenterBox, target: str, image_size: tuple[float, float]):
    """Re-encode a box between corner and center form, value preserving."""
    w, h = image_size
    if target == "center":
        if isinstance(box, CenterBox):
            return box
        return box.to_center(w, h)
    if target == "corner":
        if isinstance(box, Box):
            return box
        return box.to_corner(w, h)
    raise ValueError(f"unknown target encoding {target!r}")


def _xyxy(a: Box | CenterBox) -> tuple[float, float, float, float]:
    return a.xyxy()


def iou(a: Box | CenterBox, b: Box | CenterBox) -> float:
    """Intersection over union in [0, 1]; 0 when the union has no area."""
    ax1, ay1, ax2, ay2 = _xyxy(a)
    bx1, by1, bx2, by2 = _xyxy(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: Box | CenterBox, b: Box | CenterBox) -> float:
    """Generalized IoU in (-1, 1]: IoU minus |C \\ (A∪B)| / |C|.

    C is the smallest enclosing box. Degenerate unions use IoU = 0 and the
    penalty keeps the value finite.
    """
    ax1, ay1, ax2, ay2 = _xyxy(a)
    bx1, by1, bx2, by2 = _xyxy(b)
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    val = inter / union if union > 0.0 else 0.0
    ew = max(ax2, bx2) - min(ax1, bx1)
    eh = max(ay2, by2) - min(ay1, by1)
    enclose = ew * eh
    if enclose > 0.0:
        val -= (enclose - union) / enclose
    return val


def boxes_to_xyxy(boxes: Iterable[Box | CenterBox]) -> np.ndarray:
    """Stack boxes into an (n, 4) float64 xyxy array for the kernels."""
    return np.array([_xyxy(b) for b in boxes], dtype=np.float64).reshape(-1, 4)


def pairwise_iou(a: Sequence[Box], b: Sequence[Box]) -> np.ndarray:
    return kernels.pairwise_iou(boxes_to_xyxy(a), boxes_to_xyxy(b))


def pairwise_giou(a: Sequence[Box], b: Sequence[Box]) -> np.ndarray:
    return kernels.pairwise_giou(boxes_to_xyxy(a), boxes_to_xyxy(b))
