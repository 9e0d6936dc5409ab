"""Bipartite assignment: optimal min-cost matching, thresholded IoU matching,
and greedy NMS merging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .geometry import Box, boxes_to_xyxy


@dataclass(frozen=True)
class Assignment:
    """One-to-one pairing plus the leftovers on both sides."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]

    def row_to_col(self) -> dict[int, int]:
        return {r: c for r, c in self.pairs}


def _assignment_from_col4row(
    n_rows: int, n_cols: int, col4row: np.ndarray
) -> Assignment:
    pairs = tuple(
        (i, int(col4row[i])) for i in range(n_rows) if col4row[i] >= 0
    )
    used_cols = {c for _, c in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_rows=tuple(i for i in range(n_rows) if col4row[i] < 0),
        unmatched_cols=tuple(j for j in range(n_cols) if j not in used_cols),
    )


def solve_min_cost(costs) -> Assignment:
    """Optimal assignment minimizing total cost (Kuhn-Munkres family).

    Accepts a rectangular matrix; produces min(rows, cols) pairs. Every
    entry must be finite.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValueError("cost matrix must be 2-dimensional")
    if costs.size and not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix entries must be finite")
    col4row, _ = kernels.lap_solve(costs)
    return _assignment_from_col4row(costs.shape[0], costs.shape[1], col4row)


def match_by_iou(
    dets: Sequence[Box], tracks: Sequence[Box], min_iou: float = 0.3
) -> Assignment:
    """Match detections (rows) to tracks (cols) maximizing total IoU.

    Optimal pairs with IoU below `min_iou` are demoted to unmatched on
    both sides, so no emitted pair falls under the threshold.
    """
    if not 0.0 <= min_iou <= 1.0:
        raise ValueError("min_iou must lie in [0, 1]")
    if not dets or not tracks:
        return Assignment((), tuple(range(len(dets))), tuple(range(len(tracks))))
    iou = kernels.pairwise_iou(boxes_to_xyxy(dets), boxes_to_xyxy(tracks))
    raw = solve_min_cost(-iou)
    pairs = tuple((r, c) for r, c in raw.pairs if iou[r, c] >= min_iou)
    kept_rows = {r for r, _ in pairs}
    kept_cols = {c for _, c in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_rows=tuple(r for r in range(len(dets)) if r not in kept_rows),
        unmatched_cols=tuple(c for c in range(len(tracks)) if c not in kept_cols),
    )


def nms_merge(
    scored_boxes: Sequence[tuple[Box, float]], iou_thresh: float
) -> list[int]:
    """Greedy NMS: indices of the surviving boxes, ascending.

    A box is dropped iff it overlaps a kept higher-score box with IoU
    strictly above `iou_thresh`; score ties break by input index.
    """
    if not 0.0 <= iou_thresh <= 1.0:
        raise ValueError("iou_thresh must lie in [0, 1]")
    boxes = boxes_to_xyxy(b for b, _ in scored_boxes)
    scores = np.array([s for _, s in scored_boxes], dtype=np.float64)
    if scores.size and not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    kept, _ = kernels.nms_keep(boxes, scores, iou_thresh)
    return [int(i) for i in kept]


def nms_suppressors(
    scored_boxes: Sequence[tuple[Box, float]], iou_thresh: float
) -> tuple[list[int], np.ndarray]:
    """NMS keep list plus, for each suppressed box, the kept box that won."""
    boxes = boxes_to_xyxy(b for b, _ in scored_boxes)
    scores = np.array([s for _, s in scored_boxes], dtype=np.float64)
    kept, suppressor = kernels.nms_keep(boxes, scores, iou_thresh)
    return [int(i) for i in kept], suppressor
