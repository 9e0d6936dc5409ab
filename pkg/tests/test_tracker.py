import numpy as np
import pytest

from querytrack.geometry import Box
from querytrack.io import (
    FrameAnnotations,
    AnnotationEntry,
    annotations_from_outputs,
    replay_provider,
)
from querytrack.metrics import evaluate
from querytrack.motion import FrozenBoxPropagator, KalmanPropagator
from querytrack.synth import ScenarioSpec, generate
from querytrack.tracker import (
    Detection,
    Frame,
    Propagation,
    ProviderError,
    TrackState,
    Tracker,
    TrackerConfig,
    run_sequence,
)

CFG = TrackerConfig(score_thresh=0.3)


def det(x, y, w=10, h=10, score=1.0, slot=None):
    return Detection(Box(x, y, w, h), score, slot=slot)


def props_for(tracker):
    return [
        Propagation(t.id, t.box, t.score, payload=t.payload)
        for t in tracker.active()
    ]


class TestStep:
    def test_cold_start_assigns_sequential_ids(self):
        tracker = Tracker(CFG)
        out = tracker.step([det(0, 0), det(50, 50)])
        assert [t.id for t in out] == [1, 2]

    def test_low_scores_discarded(self):
        tracker = Tracker(CFG)
        out = tracker.step([det(0, 0, score=0.1), det(50, 50, score=0.9)])
        assert len(out) == 1

    def test_match_keeps_id_and_takes_detection_box(self):
        tracker = Tracker(CFG)
        tracker.step([det(0, 0)])
        out = tracker.step([det(2, 0)], props_for(tracker))
        assert len(out) == 1
        assert out[0].id == 1
        assert out[0].box == Box(2, 0, 10, 10)

    def test_unmatched_track_goes_inactive_and_hidden(self):
        tracker = Tracker(CFG)
        tracker.step([det(0, 0)])
        out = tracker.step([], props_for(tracker))
        assert out == []
        t = tracker.live()[0]
        assert t.state is TrackState.INACTIVE
        assert t.inactive_count == 1

    def test_inactive_regains_id(self):
        tracker = Tracker(CFG)
        tracker.step([det(0, 0)])
        for _ in range(5):
            tracker.step([], props_for(tracker))
        out = tracker.step([det(0, 0)], props_for(tracker))
        assert [t.id for t in out] == [1]
        assert tracker.live()[0].inactive_count == 0

    def test_removed_after_k_frames(self):
        cfg = TrackerConfig(rebirth_k=3, score_thresh=0.3)
        tracker = Tracker(cfg)
        tracker.step([det(0, 0)])
        for _ in range(3):
            tracker.step([], props_for(tracker))
            assert tracker.live()  # still alive through K misses
        tracker.step([], props_for(tracker))
        assert tracker.live() == []

    def test_rebirth_boundary_new_id(self):
        # Gap of exactly K keeps the id; K+1 issues a fresh one.
        for gap, expected_id in ((3, 1), (4, 2)):
            tracker = Tracker(TrackerConfig(rebirth_k=3, score_thresh=0.3))
            tracker.step([det(0, 0)])
            for _ in range(gap):
                tracker.step([], props_for(tracker))
            out = tracker.step([det(0, 0)], props_for(tracker))
            assert [t.id for t in out] == [expected_id]

    def test_ids_never_reused(self):
        tracker = Tracker(TrackerConfig(rebirth_k=0, score_thresh=0.3))
        seen = set()
        for i in range(6):
            out = tracker.step([det(0, 0)] if i % 2 == 0 else [], props_for(tracker))
            for t in out:
                seen.add(t.id)
        assert seen == {1, 2, 3}

    def test_unknown_propagation_ref_rejected(self):
        tracker = Tracker(CFG)
        with pytest.raises(ValueError, match="unknown tracklet"):
            tracker.step([], [Propagation(99, Box(0, 0, 1, 1), 1.0)])

    def test_deterministic(self):
        def run():
            tracker = Tracker(CFG)
            outs = []
            outs.append(tracker.step([det(0, 0), det(30, 30)]))
            outs.append(
                tracker.step([det(1, 0), det(31, 30), det(80, 80)], props_for(tracker))
            )
            return outs

        assert run() == run()

    def test_new_detection_spawns(self):
        tracker = Tracker(CFG)
        tracker.step([det(0, 0)])
        out = tracker.step([det(0, 0), det(90, 90)], props_for(tracker))
        assert [t.id for t in out] == [1, 2]


class TestNmsAssociation:
    def test_matches_hungarian_on_separated_objects(self):
        spec = ScenarioSpec(length=20, num_objects=3, seed=31)
        gt, detections, _ = generate(spec)
        results = {}
        for assoc in ("hungarian", "nms"):
            cfg = TrackerConfig(association=assoc, score_thresh=0.3)
            outs = run_sequence(
                [None] * spec.length,
                replay_provider(detections),
                FrozenBoxPropagator(),
                cfg,
            )
            results[assoc] = outs
        assert results["hungarian"] == results["nms"]

    def test_duplicate_detections_collapse(self):
        cfg = TrackerConfig(association="nms", score_thresh=0.3)
        tracker = Tracker(cfg)
        tracker.step([det(0, 0)])
        out = tracker.step(
            [det(0, 0, score=0.9), det(1, 0, score=0.8)], props_for(tracker)
        )
        assert [t.id for t in out] == [1]


class TestIndexAssociation:
    def test_same_slot_keeps_id(self):
        cfg = TrackerConfig(query_mode="detection_only_index", score_thresh=0.3)
        tracker = Tracker(cfg)
        tracker.step([det(0, 0, slot=4)])
        out = tracker.step([det(40, 40, slot=4)], props_for(tracker))
        assert [t.id for t in out] == [1]

    def test_slot_change_switches_id(self):
        cfg = TrackerConfig(query_mode="detection_only_index", score_thresh=0.3)
        tracker = Tracker(cfg)
        tracker.step([det(0, 0, slot=4)])
        out = tracker.step([det(2, 0, slot=5)], props_for(tracker))
        assert [t.id for t in out] == [2]

    def test_missing_slot_rejected(self):
        cfg = TrackerConfig(query_mode="detection_only_index", score_thresh=0.3)
        tracker = Tracker(cfg)
        with pytest.raises(ValueError, match="slot"):
            tracker.step([det(0, 0)])


class TestTrackOnlyMode:
    def test_no_spawns_after_first_frame(self):
        cfg = TrackerConfig(query_mode="track_only", score_thresh=0.3)
        tracker = Tracker(cfg)
        out1 = tracker.step([det(0, 0)])
        assert [t.id for t in out1] == [1]
        out2 = tracker.step([det(0, 0), det(90, 90)], props_for(tracker))
        assert [t.id for t in out2] == [1]  # newborn object never tracked


class TestRunSequence:
    def test_single_frame_pure_detection(self):
        detections = [
            FrameAnnotations(
                1,
                [
                    AnnotationEntry(-1, Box(10, 10, 20, 20), 0.9),
                    AnnotationEntry(-1, Box(200, 200, 20, 20), 0.8),
                ],
            )
        ]
        outs = run_sequence(
            [None], replay_provider(detections), FrozenBoxPropagator(), CFG
        )
        assert len(outs) == 1 and len(outs[0]) == 2

    def test_perfect_provider_matches_gt(self):
        spec = ScenarioSpec(length=12, num_objects=3, seed=13)
        gt, detections, _ = generate(spec)
        outs = run_sequence(
            [None] * spec.length,
            replay_provider(detections),
            FrozenBoxPropagator(),
            CFG,
        )
        report = evaluate(gt, annotations_from_outputs(outs))
        assert report.mota == pytest.approx(100.0)
        assert report.idsw == 0
        assert report.idf1 == pytest.approx(100.0)

    def test_birth_emits_new_id_at_birth_frame(self):
        spec = ScenarioSpec(length=10, num_objects=2, births={2: 5}, seed=3)
        _, detections, _ = generate(spec)
        outs = run_sequence(
            [None] * spec.length,
            replay_provider(detections),
            FrozenBoxPropagator(),
            CFG,
        )
        assert all(len(o) == 1 for o in outs[:4])
        assert len(outs[4]) == 2
        assert {t.id for t in outs[4]} == {1, 2}

    def test_provider_error_carries_frame_index(self):
        class Boom:
            def detect(self, frame):
                if frame.index == 3:
                    raise RuntimeError("sensor gone")
                return []

        with pytest.raises(ProviderError, match="frame 3"):
            run_sequence([None] * 5, Boom(), FrozenBoxPropagator(), CFG)

    def test_kalman_provider_round_trip(self):
        spec = ScenarioSpec(length=15, num_objects=2, seed=21,
                            speed_min=1.0, speed_max=2.0)
        gt, detections, _ = generate(spec)
        outs = run_sequence(
            [None] * spec.length,
            replay_provider(detections),
            KalmanPropagator(),
            CFG,
        )
        report = evaluate(gt, annotations_from_outputs(outs))
        assert report.mota == pytest.approx(100.0)
        assert report.idsw == 0

    def test_rebirth_over_occlusion_gap(self):
        # Object 1 occluded frames 6..9; with K=32 the id must survive.
        spec = ScenarioSpec(
            length=14, num_objects=2, seed=5, occlusions=((1, 6, 9),),
            speed_min=0.5, speed_max=1.0,
        )
        _, detections, _ = generate(spec)
        outs = run_sequence(
            [None] * spec.length,
            replay_provider(detections),
            FrozenBoxPropagator(),
            TrackerConfig(rebirth_k=32, score_thresh=0.3),
        )
        ids_before = {t.id for t in outs[4]}
        ids_after = {t.id for t in outs[10]}
        assert ids_before == ids_after == {1, 2}
