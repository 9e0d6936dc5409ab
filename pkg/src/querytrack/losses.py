"""Set-prediction matching cost and training loss.

Each prediction/ground-truth pair is scored by a weighted sum of a focal
classification term, an L1 box term, and a generalized-IoU box term, all
on normalized center-form boxes. The training loss applies the same three
terms to the optimally matched pairs, treats unmatched predictions as
background, and normalizes by the number of ground-truth objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import Assignment, solve_min_cost
from .geometry import CenterBox, giou


@dataclass(frozen=True)
class LossWeights:
    """Component coefficients plus focal-loss shape parameters."""

    lambda_cls: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    prob_eps: float = 1e-8

    def __post_init__(self):
        if min(self.lambda_cls, self.lambda_l1, self.lambda_giou) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class Prediction:
    box: CenterBox
    class_probs: np.ndarray  # per-class probabilities in [0, 1]

    def __post_init__(self):
        self.class_probs = np.asarray(self.class_probs, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class GroundTruth:
    box: CenterBox
    class_id: int = 0


def focal_loss(
    prob: float,
    is_positive: bool,
    alpha: float = 0.25,
    gamma: float = 2.0,
    eps: float = 1e-8,
) -> float:
    """Focal loss for one probability, clamped into [eps, 1 - eps]."""
    p = min(max(prob, eps), 1.0 - eps)
    if is_positive:
        return -alpha * (1.0 - p) ** gamma * math.log(p)
    return -(1.0 - alpha) * p**gamma * math.log(1.0 - p)


def l1_box(a: CenterBox, b: CenterBox) -> float:
    """Sum of absolute differences over (cx, cy, w, h)."""
    return abs(a.cx - b.cx) + abs(a.cy - b.cy) + abs(a.w - b.w) + abs(a.h - b.h)


def pair_cost(pred: Prediction, gt: GroundTruth, w: LossWeights) -> float:
    """Matching cost of one prediction/ground-truth pair.

    The classification term is the positive focal loss on the ground-truth
    class only; box terms compare normalized center coordinates.
    """
    if not 0 <= gt.class_id < len(pred.class_probs):
        raise ValueError(f"class_id {gt.class_id} out of range")
    cls = focal_loss(
        float(pred.class_probs[gt.class_id]),
        True,
        w.focal_alpha,
        w.focal_gamma,
        w.prob_eps,
    )
    return (
        w.lambda_cls * cls
        + w.lambda_l1 * l1_box(pred.box, gt.box)
        + w.lambda_giou * (1.0 - giou(pred.box, gt.box))
    )


def cost_matrix(
    preds: Sequence[Prediction], gts: Sequence[GroundTruth], w: LossWeights
) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            out[i, j] = pair_cost(p, g, w)
    return out


def optimal_match(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    w: LossWeights | None = None,
) -> Assignment:
    """Optimal bipartite matching of predictions (rows) to ground truth."""
    w = w or LossWeights()
    if not preds or not gts:
        return Assignment((), tuple(range(len(preds))), tuple(range(len(gts))))
    return solve_min_cost(cost_matrix(preds, gts, w))


def set_loss(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    w: LossWeights | None = None,
    assignment: Assignment | None = None,
) -> float:
    """Matched-pair training loss normalized by the ground-truth count.

    Classification runs over every prediction and class: matched cells are
    positives, everything else background. Box terms apply to matched pairs
    only. Pass `assignment` to supervise with a fixed matching (the
    "previous"-strategy path); by default the optimal matching is used.
    """
    w = w or LossWeights()
    if assignment is None:
        assignment = optimal_match(preds, gts, w)
    cls = 0.0
    positive = {r: gts[c].class_id for r, c in assignment.pairs}
    for i, p in enumerate(preds):
        for c, prob in enumerate(p.class_probs):
            cls += focal_loss(
                float(prob),
                positive.get(i) == c,
                w.focal_alpha,
                w.focal_gamma,
                w.prob_eps,
            )
    l1 = 0.0
    gv = 0.0
    for r, c in assignment.pairs:
        l1 += l1_box(preds[r].box, gts[c].box)
        gv += 1.0 - giou(preds[r].box, gts[c].box)
    total = w.lambda_cls * cls + w.lambda_l1 * l1 + w.lambda_giou * gv
    return total / max(1, len(gts))
