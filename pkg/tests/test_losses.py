import itertools
import math
import random

import numpy as np
import pytest

from querytrack.geometry import CenterBox, giou
from querytrack.losses import (
    GroundTruth,
    LossWeights,
    Prediction,
    cost_matrix,
    focal_loss,
    l1_box,
    optimal_match,
    pair_cost,
    set_loss,
)

W = LossWeights()


def rand_center_box(rng: random.Random) -> CenterBox:
    w = rng.uniform(0.05, 0.4)
    h = rng.uniform(0.05, 0.4)
    return CenterBox(rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h)


class TestFocalLoss:
    def test_perfect_positive_is_near_zero(self):
        assert focal_loss(1.0, True) == pytest.approx(0.0, abs=1e-7)

    def test_half_probability_positive(self):
        # -0.25 * (0.5)^2 * ln(0.5) = 0.25 * 0.25 * ln 2
        expected = 0.25 * 0.25 * math.log(2.0)
        assert focal_loss(0.5, True, alpha=0.25, gamma=2.0) == pytest.approx(
            expected, rel=1e-12
        )
        assert expected == pytest.approx(0.043322, abs=1e-6)

    def test_reduces_to_cross_entropy(self):
        for p in (0.1, 0.37, 0.9):
            assert focal_loss(p, True, alpha=1.0, gamma=0.0) == pytest.approx(
                -math.log(p)
            )

    def test_clamping_keeps_loss_finite(self):
        assert math.isfinite(focal_loss(0.0, True))
        assert math.isfinite(focal_loss(1.0, False))

    def test_negative_branch(self):
        expected = -0.75 * 0.25 * math.log(0.5)
        assert focal_loss(0.5, False, alpha=0.25, gamma=2.0) == pytest.approx(expected)


class TestPairCost:
    def test_perfect_pair_is_zero(self):
        box = CenterBox(0.5, 0.5, 0.2, 0.2)
        pred = Prediction(box, np.array([1.0]))
        assert pair_cost(pred, GroundTruth(box), W) == pytest.approx(0.0, abs=1e-6)

    def test_single_l1_term(self):
        w = LossWeights(lambda_cls=0.0, lambda_l1=1.0, lambda_giou=0.0)
        a = CenterBox(0.5, 0.5, 0.2, 0.2)
        b = CenterBox(0.6, 0.5, 0.2, 0.2)
        pred = Prediction(a, np.array([0.5]))
        assert pair_cost(pred, GroundTruth(b), w) == pytest.approx(0.1)

    def test_sum_of_three_terms(self):
        # Crafted pair: each term computed independently, then summed.
        pa = CenterBox(0.4, 0.4, 0.2, 0.3)
        ga = CenterBox(0.5, 0.45, 0.25, 0.2)
        prob = 0.7
        pred = Prediction(pa, np.array([prob]))
        expected = (
            W.lambda_cls * focal_loss(prob, True, W.focal_alpha, W.focal_gamma)
            + W.lambda_l1 * l1_box(pa, ga)
            + W.lambda_giou * (1.0 - giou(pa, ga))
        )
        assert pair_cost(pred, GroundTruth(ga), W) == pytest.approx(expected, rel=1e-12)

    def test_rejects_out_of_range_class(self):
        pred = Prediction(CenterBox(0.5, 0.5, 0.1, 0.1), np.array([0.5]))
        with pytest.raises(ValueError):
            pair_cost(pred, GroundTruth(CenterBox(0.5, 0.5, 0.1, 0.1), class_id=3), W)


class TestOptimalMatch:
    def test_recovers_permutation(self):
        rng = random.Random(5)
        gts = [GroundTruth(rand_center_box(rng)) for _ in range(4)]
        perm = [2, 0, 3, 1]
        preds = [Prediction(gts[j].box, np.array([0.9])) for j in perm]
        a = optimal_match(preds, gts, W)
        assert {(i, perm[i]) for i in range(4)} == set(a.pairs)

    def test_more_preds_than_gts(self):
        rng = random.Random(6)
        gts = [GroundTruth(rand_center_box(rng)) for _ in range(2)]
        preds = [Prediction(rand_center_box(rng), np.array([0.5])) for _ in range(5)]
        a = optimal_match(preds, gts, W)
        assert len(a.pairs) == 2
        assert len(a.unmatched_rows) == 3

    def test_matches_brute_force(self):
        rng = random.Random(7)
        for _ in range(40):
            preds = [
                Prediction(rand_center_box(rng), np.array([rng.random()]))
                for _ in range(3)
            ]
            gts = [GroundTruth(rand_center_box(rng)) for _ in range(3)]
            costs = cost_matrix(preds, gts, W)
            best = min(
                itertools.permutations(range(3)),
                key=lambda p: sum(costs[i, p[i]] for i in range(3)),
            )
            got = optimal_match(preds, gts, W)
            got_total = sum(costs[i, j] for i, j in got.pairs)
            assert got_total == pytest.approx(
                sum(costs[i, best[i]] for i in range(3)), abs=1e-12
            )

    def test_invariant_under_uniform_weight_scaling(self):
        rng = random.Random(8)
        preds = [
            Prediction(rand_center_box(rng), np.array([rng.random()]))
            for _ in range(4)
        ]
        gts = [GroundTruth(rand_center_box(rng)) for _ in range(4)]
        scaled = LossWeights(
            lambda_cls=W.lambda_cls * 7.5,
            lambda_l1=W.lambda_l1 * 7.5,
            lambda_giou=W.lambda_giou * 7.5,
        )
        assert optimal_match(preds, gts, W).pairs == optimal_match(
            preds, gts, scaled
        ).pairs


class TestSetLoss:
    def test_perfect_predictions(self):
        rng = random.Random(9)
        gts = [GroundTruth(rand_center_box(rng)) for _ in range(3)]
        preds = [Prediction(g.box, np.array([1.0])) for g in gts]
        loss = set_loss(preds, gts, W)
        # Only the clamp-floor classification term survives.
        floor = 3 * W.lambda_cls * focal_loss(1.0, True) / 3
        assert loss == pytest.approx(floor, abs=1e-12)
        assert loss < 1e-6

    def test_empty_gts_pure_negative_focal(self):
        preds = [
            Prediction(CenterBox(0.5, 0.5, 0.1, 0.1), np.array([0.3])),
            Prediction(CenterBox(0.2, 0.2, 0.1, 0.1), np.array([0.8])),
        ]
        expected = W.lambda_cls * (
            focal_loss(0.3, False) + focal_loss(0.8, False)
        )
        assert set_loss(preds, [], W) == pytest.approx(expected, rel=1e-12)

    def test_two_pred_two_gt_hand_summed(self):
        # Fixed instance; every term recomputed independently below.
        p0 = Prediction(CenterBox(0.30, 0.30, 0.20, 0.20), np.array([0.9]))
        p1 = Prediction(CenterBox(0.70, 0.60, 0.25, 0.30), np.array([0.4]))
        g0 = GroundTruth(CenterBox(0.32, 0.29, 0.22, 0.18))
        g1 = GroundTruth(CenterBox(0.68, 0.63, 0.24, 0.33))
        # Pairing (0,0),(1,1) is clearly optimal (boxes nearly coincide).
        cls = focal_loss(0.9, True) + focal_loss(0.4, True)
        l1 = l1_box(p0.box, g0.box) + l1_box(p1.box, g1.box)
        gv = (1 - giou(p0.box, g0.box)) + (1 - giou(p1.box, g1.box))
        expected = (W.lambda_cls * cls + W.lambda_l1 * l1 + W.lambda_giou * gv) / 2
        assert set_loss([p0, p1], [g0, g1], W) == pytest.approx(expected, rel=1e-12)

    def test_non_negative_random(self):
        rng = random.Random(10)
        for _ in range(50):
            preds = [
                Prediction(rand_center_box(rng), np.array([rng.random()]))
                for _ in range(rng.randint(0, 5))
            ]
            gts = [GroundTruth(rand_center_box(rng)) for _ in range(rng.randint(0, 4))]
            assert set_loss(preds, gts, W) >= 0.0

    def test_decreases_when_box_moves_toward_gt(self):
        # Finite-difference check: displace one coordinate at a time and
        # step it back toward the ground truth.
        rng = random.Random(11)
        for _ in range(20):
            gt_box = rand_center_box(rng)
            gts = [GroundTruth(gt_box)]
            for field, offset in (("cx", 0.08), ("cy", -0.06), ("w", 0.05), ("h", 0.05)):
                coords = {
                    "cx": gt_box.cx,
                    "cy": gt_box.cy,
                    "w": gt_box.w,
                    "h": gt_box.h,
                }
                coords[field] += offset
                base = set_loss(
                    [Prediction(CenterBox(**coords), np.array([0.8]))], gts, W
                )
                coords[field] -= math.copysign(0.01, offset)
                loss = set_loss(
                    [Prediction(CenterBox(**coords), np.array([0.8]))], gts, W
                )
                assert loss < base

    def test_permutation_invariant(self):
        rng = random.Random(12)
        preds = [
            Prediction(rand_center_box(rng), np.array([rng.random()]))
            for _ in range(5)
        ]
        gts = [GroundTruth(rand_center_box(rng)) for _ in range(3)]
        base = set_loss(preds, gts, W)
        order = [3, 1, 4, 0, 2]
        assert set_loss([preds[i] for i in order], gts, W) == pytest.approx(
            base, rel=1e-12
        )

    def test_fixed_assignment_override(self):
        box = CenterBox(0.5, 0.5, 0.2, 0.2)
        far = CenterBox(0.1, 0.1, 0.2, 0.2)
        preds = [Prediction(box, np.array([0.9])), Prediction(far, np.array([0.9]))]
        gts = [GroundTruth(box)]
        from querytrack.assignment import Assignment

        forced = Assignment(pairs=((1, 0),), unmatched_rows=(0,), unmatched_cols=())
        assert set_loss(preds, gts, W, assignment=forced) > set_loss(preds, gts, W)

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_cls=-1.0)
