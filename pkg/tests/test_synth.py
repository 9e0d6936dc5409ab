import numpy as np
import pytest

from querytrack.geometry import Box, iou
from querytrack.synth import (
    ScenarioSpec,
    SplitMix64,
    TrainingPair,
    featurize,
    generate,
    make_training_pairs,
    perturb_static,
    skip_sample,
    spec_from_text,
    spec_to_text,
)


class TestSplitMix64:
    def test_reference_sequence(self):
        # First outputs for seed 1234567, from the published SplitMix64
        # reference (Steele/Lea/Flood constants).
        rng = SplitMix64(1234567)
        got = [rng.next_raw() for _ in range(3)]
        assert got == [
            6457827717110365317,
            3203168211198807973,
            9817491932198370423,
        ]

    def test_zero_seed_first_value(self):
        # splitmix64(0) must produce the well-known first output.
        assert SplitMix64(0).next_raw() == 16294208416658607535

    def test_uniform_range(self):
        rng = SplitMix64(99)
        vals = [rng.uniform(2.0, 3.0) for _ in range(500)]
        assert all(2.0 <= v < 3.0 for v in vals)

    def test_normal_moments(self):
        rng = SplitMix64(3)
        vals = np.array([rng.normal() for _ in range(4000)])
        assert abs(vals.mean()) < 0.06
        assert abs(vals.std() - 1.0) < 0.05

    def test_determinism(self):
        a = SplitMix64(42)
        b = SplitMix64(42)
        assert [a.next_raw() for _ in range(10)] == [b.next_raw() for _ in range(10)]


def small_spec(**kw) -> ScenarioSpec:
    base = dict(image_w=256, image_h=256, length=12, num_objects=2, seed=5)
    base.update(kw)
    return ScenarioSpec(**base)


class TestGenerate:
    def test_zero_noise_detections_equal_gt(self):
        gt, det, _ = generate(small_spec())
        for fg, fd in zip(gt, det):
            assert [e.box for e in fg.entries] == [e.box for e in fd.entries]
            assert all(e.id == -1 for e in fd.entries)

    def test_same_seed_bit_identical(self):
        spec = small_spec(center_std=1.5, size_std=0.7, miss_prob=0.2)
        gt1, det1, feats1 = generate(spec)
        gt2, det2, feats2 = generate(spec)
        assert gt1 == gt2
        assert det1 == det2
        for a, b in zip(feats1, feats2):
            assert np.array_equal(a, b)

    def test_occlusion_window(self):
        spec = small_spec(occlusions=((1, 5, 8),))
        gt, det, _ = generate(spec)
        for fa in det:
            det_boxes = {tuple(e.box.xyxy()) for e in fa.entries}
            gt_obj1 = [e for e in gt[fa.frame - 1].entries if e.id == 1]
            if 5 <= fa.frame <= 8:
                assert gt_obj1 and gt_obj1[0].visibility == 0.0
                assert tuple(gt_obj1[0].box.xyxy()) not in det_boxes
            else:
                assert tuple(gt_obj1[0].box.xyxy()) in det_boxes

    def test_birth_death_window(self):
        spec = small_spec(births={2: 4}, deaths={2: 9})
        gt, _, _ = generate(spec)
        for fa in gt:
            present = {e.id for e in fa.entries}
            assert (2 in present) == (4 <= fa.frame <= 9)

    def test_objects_stay_inside_image(self):
        spec = small_spec(length=200, speed_min=3, speed_max=6, motion="sinusoidal")
        gt, _, _ = generate(spec)
        for fa in gt:
            for e in fa.entries:
                assert e.box.left >= -1e-9 and e.box.top >= -1e-9
                assert e.box.right <= spec.image_w + 1e-9
                assert e.box.bottom <= spec.image_h + 1e-9

    def test_lanes_keep_objects_disjoint(self):
        spec = small_spec(num_objects=4, length=60, motion="sinusoidal", seed=11)
        gt, _, _ = generate(spec)
        for fa in gt:
            for i, a in enumerate(fa.entries):
                for b in fa.entries[i + 1 :]:
                    assert iou(a.box, b.box) < 0.3

    def test_validation(self):
        with pytest.raises(ValueError):
            small_spec(births={1: 12}, deaths={1: 12})
        with pytest.raises(ValueError):
            small_spec(miss_prob=1.5)
        with pytest.raises(ValueError):
            small_spec(occlusions=((9, 1, 2),))


class TestFeaturize:
    def test_shape_and_coordinate_channels(self):
        feat = featurize([], (100, 100), 8)
        assert feat.shape == (8, 8, 3)
        assert feat[:, :, 0].sum() == 0.0
        assert feat[0, 0, 1] == pytest.approx(0.5 / 8)
        assert feat[0, 7, 1] == pytest.approx(7.5 / 8)
        assert feat[3, 0, 2] == pytest.approx(3.5 / 8)

    def test_blob_peaks_at_object_center(self):
        feat = featurize([Box(41, 62, 20, 20)], (100, 100), 10)
        amp = feat[:, :, 0]
        r, c = np.unravel_index(np.argmax(amp), amp.shape)
        # Object center (51, 72) -> nearest cell centers (0.55, 0.75).
        assert (r, c) == (7, 5)


class TestPerturbStatic:
    def test_identity_transform(self):
        gt, _, feats = generate(small_spec())
        out, feat2 = perturb_static(
            gt[0], feats[0], (256.0, 256.0), (1.0, 1.0), (0.0, 0.0), seed=3
        )
        assert [e.box for e in out.entries] == [e.box for e in gt[0].entries]
        assert np.array_equal(feat2, feats[0])

    def test_pure_translation(self):
        gt, _, feats = generate(small_spec())
        out, _ = perturb_static(
            gt[0], feats[0], (256.0, 256.0), (1.0, 1.0), (5.0, 0.0), seed=0
        )
        rng = SplitMix64(0)
        rng.uniform(1.0, 1.0)
        tx = rng.uniform(-5.0, 5.0)
        for before, after in zip(gt[0].entries, out.entries):
            assert after.box.left == pytest.approx(
                min(max(0.0, before.box.left + tx), 256.0), abs=1e-9
            )
            assert after.box.top == pytest.approx(before.box.top)

    def test_seeded_transform_reproducible(self):
        gt, _, feats = generate(small_spec())
        a = perturb_static(gt[0], feats[0], (256.0, 256.0), seed=77)
        b = perturb_static(gt[0], feats[0], (256.0, 256.0), seed=77)
        assert [e.box for e in a[0].entries] == [e.box for e in b[0].entries]
        assert np.array_equal(a[1], b[1])

    def test_fully_clipped_objects_removed(self):
        anno = generate(small_spec())[0][0]
        feat = featurize([e.box for e in anno.entries], (256.0, 256.0), 8)
        out, _ = perturb_static(
            anno, feat, (256.0, 256.0), (1.0, 1.0), (0.0, 0.0), seed=1
        )
        assert len(out.entries) == len(anno.entries)
        far, _ = perturb_static(
            anno, feat, (256.0, 256.0), (1.0, 1.0), (0.0, 0.0), seed=1
        )
        # Move everything far out of frame via a huge translation window:
        # draws are deterministic, so hunt for a seed pushing all out.
        gone, _ = perturb_static(
            anno, feat, (256.0, 256.0), (1.0, 1.0), (5000.0, 5000.0), seed=4
        )
        assert len(gone.entries) < len(anno.entries)


class TestSkipSample:
    def test_identity_stride(self):
        gt, _, _ = generate(small_spec())
        assert skip_sample(gt, 1) == gt

    def test_stride_four(self):
        gt, _, _ = generate(small_spec(length=9))
        kept = skip_sample(gt, 4)
        assert [f.frame for f in kept] == [1, 2, 3]
        assert kept[1].entries == gt[4].entries
        assert kept[2].entries == gt[8].entries

    def test_gt_and_det_consistent(self):
        spec = small_spec(length=9, miss_prob=0.3, seed=8)
        gt, det, feats = generate(spec)
        gt_s = skip_sample(gt, 4)
        det_s = skip_sample(det, 4)
        feat_s = skip_sample(feats, 4)
        assert len(gt_s) == len(det_s) == len(feat_s) == 3
        assert det_s[2].entries == det[8].entries

    def test_rejects_bad_stride(self):
        with pytest.raises(ValueError):
            skip_sample([], 0)


class TestSpecSerialization:
    def test_round_trip(self):
        spec = ScenarioSpec(
            image_w=320,
            image_h=240,
            length=30,
            num_objects=3,
            motion="sinusoidal",
            miss_prob=0.1,
            center_std=1.5,
            births={2: 5},
            deaths={2: 20},
            occlusions=((1, 3, 6),),
            seed=99,
        )
        assert spec_from_text(spec_to_text(spec)) == spec

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            spec_from_text("flavor=spicy\n")

    def test_comments_and_blank_lines(self):
        text = "# comment\n\nseed=7\nlength=10\n"
        assert spec_from_text(text).seed == 7


class TestTrainingPairs:
    def test_deterministic(self):
        a = make_training_pairs(4, seed=21)
        b = make_training_pairs(4, seed=21)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.feat1, pb.feat1)
            assert np.array_equal(pa.feat2, pb.feat2)
            assert pa.boxes1 == pb.boxes1
            assert pa.boxes2 == pb.boxes2

    def test_shapes_and_ids(self):
        pairs = make_training_pairs(6, seed=2, feature_grid=8)
        assert len(pairs) == 6
        for p in pairs:
            assert isinstance(p, TrainingPair)
            assert p.feat1.shape == (8, 8, 3)
            assert len(p.boxes1) == len(p.ids1) >= 1
            assert set(p.ids2) <= set(p.ids1)  # objects can only be clipped away
