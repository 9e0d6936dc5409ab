import numpy as np
import pytest

from querytrack.geometry import Box, iou
from querytrack.motion import (
    FrozenBoxPropagator,
    KalmanPropagator,
    KalmanState,
    kf_init,
    kf_predict,
    kf_update,
    propagate_none,
    state_to_box,
)
from querytrack.tracker import Frame, Tracklet


class TestKfInit:
    def test_velocities_zero(self):
        s = kf_init(Box(3, 4, 12, 30))
        assert np.all(s.mean[4:] == 0.0)

    def test_mean_from_box(self):
        s = kf_init(Box(0, 0, 10, 10))
        np.testing.assert_allclose(s.mean, [5, 5, 1, 10, 0, 0, 0, 0])

    def test_covariance_symmetric_psd(self):
        s = kf_init(Box(5, 5, 20, 40))
        np.testing.assert_allclose(s.cov, s.cov.T, atol=1e-9)
        assert np.all(np.linalg.eigvalsh(s.cov) >= 0)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            kf_init(Box(0, 0, 0, 10))


class TestKfPredict:
    def test_zero_velocity_keeps_position(self):
        s = kf_predict(kf_init(Box(0, 0, 10, 10)))
        np.testing.assert_allclose(s.mean[:4], [5, 5, 1, 10])

    def test_velocity_advances_center(self):
        s0 = kf_init(Box(0, 0, 10, 10))
        mean = s0.mean.copy()
        mean[4] = 2.0
        s = kf_predict(KalmanState(mean, s0.cov))
        assert s.mean[0] == pytest.approx(7.0)

    def test_covariance_trace_strictly_increases(self):
        s = kf_init(Box(0, 0, 10, 10))
        for _ in range(5):
            s2 = kf_predict(s)
            assert np.trace(s2.cov) > np.trace(s.cov)
            s = s2


class TestKfUpdate:
    def test_converges_to_repeated_measurement(self):
        target = Box(100, 50, 20, 40)
        s = kf_init(Box(90, 45, 18, 36))
        for _ in range(20):
            s = kf_update(kf_predict(s), target)
        np.testing.assert_allclose(
            s.mean[:4],
            [110, 70, 0.5, 40],
            atol=1e-3,
        )

    def test_measurement_at_prediction_keeps_mean(self):
        s = kf_predict(kf_init(Box(0, 0, 10, 10)))
        s2 = kf_update(s, state_to_box(s))
        np.testing.assert_allclose(s2.mean, s.mean, atol=1e-9)

    def test_position_variance_never_grows(self):
        s = kf_predict(kf_init(Box(0, 0, 10, 10)))
        s2 = kf_update(s, Box(1, 1, 10, 10))
        for k in range(4):
            assert s2.cov[k, k] <= s.cov[k, k] + 1e-12

    def test_singular_innovation_rejected(self):
        s = kf_init(Box(0, 0, 10, 10))
        broken = KalmanState(s.mean, np.zeros((8, 8)))
        from querytrack.motion import KalmanConfig

        with pytest.raises(ValueError, match="singular"):
            kf_update(
                broken,
                Box(0, 0, 10, 10),
                KalmanConfig(std_weight_position=0.0),
            )

    def test_tracks_constant_velocity_line(self):
        # Noiseless constant-velocity measurements: predicted centers lock
        # onto the true trajectory within half a pixel after 30 frames.
        v = 3.0
        s = kf_init(Box(0, 0, 20, 20))
        err = None
        for t in range(1, 31):
            s = kf_predict(s)
            true_box = Box(v * t, 0, 20, 20)
            pred_center = s.mean[0]
            err = abs(pred_center - (true_box.left + 10))
            s = kf_update(s, true_box)
        assert err is not None and err < 0.5


class TestPropagateNone:
    def test_returns_stored_box(self):
        t = Tracklet(id=1, box=Box(5, 6, 7, 8), score=0.9)
        assert propagate_none(t) == Box(5, 6, 7, 8)

    def test_idempotent(self):
        t = Tracklet(id=1, box=Box(5, 6, 7, 8), score=0.9)
        assert propagate_none(t) == propagate_none(t)

    def test_frozen_propagator_payloads(self):
        p = FrozenBoxPropagator()
        t = Tracklet(id=3, box=Box(0, 0, 5, 5), score=1.0)
        out = p.propagate(Frame(2), [t])
        assert out[0].box == t.box and out[0].track_id == 3
        assert p.init_payload(None) is None

    def test_skip4_iou_worse_than_kalman(self):
        # Linear motion sampled every 4 frames: the frozen box falls behind
        # while the Kalman prediction keeps overlapping the true box.
        v, w = 4.5, 40.0
        stride = 4
        boxes = [Box(v * stride * t, 100, w, w) for t in range(12)]
        s = kf_init(boxes[0])
        frozen_iou, kalman_iou = [], []
        prev = boxes[0]
        for true_box in boxes[1:]:
            s = kf_predict(s)
            frozen_iou.append(iou(prev, true_box))
            kalman_iou.append(iou(state_to_box(s), true_box))
            s = kf_update(s, true_box)
            prev = true_box
        assert np.mean(frozen_iou) < np.mean(kalman_iou)
