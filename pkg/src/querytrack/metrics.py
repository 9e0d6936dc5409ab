"""CLEAR-MOT metrics (MOTA, MOTP, FP, FN, IDSW, MT, ML) and IDF1.

Matching follows the CLEAR protocol with IoU-based correspondence at a
0.5 threshold: correspondences from the previous frame carry over while
both boxes are present and still overlap, the remainder is resolved by
maximum-total-IoU Hungarian matching, and an ID switch is counted whenever
a matched ground-truth object changes its prediction id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import solve_min_cost
from .geometry import boxes_to_xyxy
from .io import FrameAnnotations
from .kernels import pairwise_iou

_BIG = 1e9


@dataclass(frozen=True)
class MotReport:
    mota: float  # percent; may be negative
    motp: float  # mean IoU of matches, percent
    fp: int
    fn: int
    idsw: int
    fp_rate: float  # percent of GT boxes
    fn_rate: float
    idsw_rate: float
    mt: float  # percent of GT trajectories mostly (>= 80%) tracked
    ml: float  # percent of GT trajectories mostly (<= 20%) lost
    idf1: float
    gt_count: int


_REPORT_KEYS = (
    "mota", "motp", "idf1", "fp", "fn", "idsw",
    "fp_rate", "fn_rate", "idsw_rate", "mt", "ml", "gt_count",
)


def mota_from_rates(fp_rate: float, fn_rate: float, idsw_rate: float) -> float:
    """MOTA from error rates given as percentages of the GT box count."""
    return 100.0 - fp_rate - fn_rate - idsw_rate


def _check_sequences(gt, pred):
    if len(gt) != len(pred):
        raise ValueError(
            f"frame ranges differ: {len(gt)} GT frames vs {len(pred)} predicted"
        )
    for seq in (gt, pred):
        for fa in seq:
            ids = [e.id for e in fa.entries]
            if len(ids) != len(set(ids)):
                raise ValueError(f"duplicate (frame, id) in frame {fa.frame}")


def evaluate(
    gt: Sequence[FrameAnnotations],
    pred: Sequence[FrameAnnotations],
    iou_thresh: float = 0.5,
) -> MotReport:
    """CLEAR-MOT evaluation of a prediction sequence against ground truth."""
    _check_sequences(gt, pred)
    mapping: dict[int, int] = {}  # gt id -> last matched pred id
    fp = fn = idsw = 0
    iou_sum = 0.0
    num_matches = 0
    gt_count = 0
    gt_frames: dict[int, int] = {}  # gt id -> frames present
    gt_covered: dict[int, int] = {}  # gt id -> frames matched

    for fa_gt, fa_pred in zip(gt, pred):
        gt_ids = [e.id for e in fa_gt.entries]
        pred_ids = [e.id for e in fa_pred.entries]
        gt_count += len(gt_ids)
        for g in gt_ids:
            gt_frames[g] = gt_frames.get(g, 0) + 1
        if not gt_ids and not pred_ids:
            continue
        iou = (
            pairwise_iou(
                boxes_to_xyxy(e.box for e in fa_gt.entries),
                boxes_to_xyxy(e.box for e in fa_pred.entries),
            )
            if gt_ids and pred_ids
            else np.zeros((len(gt_ids), len(pred_ids)))
        )
        pred_index = {p: j for j, p in enumerate(pred_ids)}
        matches: dict[int, int] = {}  # gt id -> pred id, this frame
        # Step 1: carry over still-valid correspondences.
        for gi, g in enumerate(gt_ids):
            h = mapping.get(g)
            if h is None or h not in pred_index:
                continue
            if iou[gi, pred_index[h]] >= iou_thresh:
                matches[g] = h
                iou_sum += iou[gi, pred_index[h]]
        # Step 2: Hungarian on the remainder, maximizing total IoU.
        free_g = [gi for gi, g in enumerate(gt_ids) if g not in matches]
        taken = set(matches.values())
        free_p = [pj for pj, p in enumerate(pred_ids) if p not in taken]
        if free_g and free_p:
            costs = np.full((len(free_g), len(free_p)), _BIG)
            for a, gi in enumerate(free_g):
                for b, pj in enumerate(free_p):
                    if iou[gi, pj] >= iou_thresh:
                        costs[a, b] = -iou[gi, pj]
            for a, b in solve_min_cost(costs).pairs:
                gi, pj = free_g[a], free_p[b]
                if iou[gi, pj] < iou_thresh:
                    continue
                g, h = gt_ids[gi], pred_ids[pj]
                matches[g] = h
                iou_sum += iou[gi, pj]
        # Bookkeeping.
        for g, h in matches.items():
            old = mapping.get(g)
            if old is not None and old != h:
                idsw += 1
            mapping[g] = h
            gt_covered[g] = gt_covered.get(g, 0) + 1
        num_matches += len(matches)
        fn += len(gt_ids) - len(matches)
        fp += len(pred_ids) - len(matches)

    denom = max(1, gt_count)
    fp_rate = 100.0 * fp / denom
    fn_rate = 100.0 * fn / denom
    idsw_rate = 100.0 * idsw / denom
    trajectories = max(1, len(gt_frames))
    mt = 100.0 * sum(
        1
        for g, total in gt_frames.items()
        if gt_covered.get(g, 0) >= 0.8 * total
    ) / trajectories
    ml = 100.0 * sum(
        1
        for g, total in gt_frames.items()
        if gt_covered.get(g, 0) <= 0.2 * total
    ) / trajectories
    return MotReport(
        mota=mota_from_rates(fp_rate, fn_rate, idsw_rate),
        motp=100.0 * iou_sum / num_matches if num_matches else 0.0,
        fp=fp,
        fn=fn,
        idsw=idsw,
        fp_rate=fp_rate,
        fn_rate=fn_rate,
        idsw_rate=idsw_rate,
        mt=mt,
        ml=ml,
        idf1=idf1(gt, pred, iou_thresh),
        gt_count=gt_count,
    )


def idf1(
    gt: Sequence[FrameAnnotations],
    pred: Sequence[FrameAnnotations],
    iou_thresh: float = 0.5,
) -> float:
    """Identity F1: global one-to-one ID matching over per-frame overlaps.

    IDTP maximizes the total number of frames in which a ground-truth id
    and its globally assigned prediction id overlap at `iou_thresh`.
    """
    _check_sequences(gt, pred)
    overlap: dict[tuple[int, int], int] = {}
    total_gt = 0
    total_pred = 0
    gt_ids: list[int] = []
    pred_ids: list[int] = []
    for fa_gt, fa_pred in zip(gt, pred):
        total_gt += len(fa_gt.entries)
        total_pred += len(fa_pred.entries)
        if not fa_gt.entries or not fa_pred.entries:
            for e in fa_gt.entries:
                if e.id not in gt_ids:
                    gt_ids.append(e.id)
            for e in fa_pred.entries:
                if e.id not in pred_ids:
                    pred_ids.append(e.id)
            continue
        iou = pairwise_iou(
            boxes_to_xyxy(e.box for e in fa_gt.entries),
            boxes_to_xyxy(e.box for e in fa_pred.entries),
        )
        for gi, ge in enumerate(fa_gt.entries):
            if ge.id not in gt_ids:
                gt_ids.append(ge.id)
            for pj, pe in enumerate(fa_pred.entries):
                if pe.id not in pred_ids:
                    pred_ids.append(pe.id)
                if iou[gi, pj] >= iou_thresh:
                    key = (ge.id, pe.id)
                    overlap[key] = overlap.get(key, 0) + 1
    if total_gt == 0 and total_pred == 0:
        return 100.0
    if not overlap:
        return 0.0
    costs = np.zeros((len(gt_ids), len(pred_ids)))
    for (g, p), count in overlap.items():
        costs[gt_ids.index(g), pred_ids.index(p)] = -count
    idtp = -sum(costs[a, b] for a, b in solve_min_cost(costs).pairs)
    return 100.0 * 2.0 * idtp / (total_gt + total_pred)


def format_report(report: MotReport) -> str:
    """Human-readable aligned table."""
    rows = [
        ("MOTA", f"{report.mota:.2f}"),
        ("MOTP", f"{report.motp:.2f}"),
        ("IDF1", f"{report.idf1:.2f}"),
        ("FP", str(report.fp)),
        ("FN", str(report.fn)),
        ("IDSW", str(report.idsw)),
        ("FP%", f"{report.fp_rate:.2f}"),
        ("FN%", f"{report.fn_rate:.2f}"),
        ("IDSW%", f"{report.idsw_rate:.2f}"),
        ("MT%", f"{report.mt:.2f}"),
        ("ML%", f"{report.ml:.2f}"),
        ("GT", str(report.gt_count)),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def report_keyvalues(report: MotReport) -> str:
    """Machine-readable key=value lines, one metric per line."""
    lines = []
    for key in _REPORT_KEYS:
        value = getattr(report, key)
        if isinstance(value, int):
            lines.append(f"{key}={value}")
        else:
            lines.append(f"{key}={value:.6f}")
    return "\n".join(lines) + "\n"
