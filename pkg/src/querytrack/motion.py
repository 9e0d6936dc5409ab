"""Baseline propagation models: frozen box (IoU-only association) and a
constant-velocity Kalman filter over (cx, cy, aspect, h).

Noise scales follow the SORT/DeepSORT convention: position and velocity
standard deviations proportional to the box height.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box
from .tracker import Detection, Frame, Propagation, Tracklet


@dataclass(frozen=True)
class KalmanConfig:
    std_weight_position: float = 1.0 / 20.0
    std_weight_velocity: float = 1.0 / 40.0


@dataclass(frozen=True)
class KalmanState:
    """Mean (cx, cy, aspect, h, and velocities) plus covariance (8x8)."""

    mean: np.ndarray
    cov: np.ndarray


_DIM = 8
# Constant-velocity transition: position += velocity each frame.
_F = np.eye(_DIM)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, _DIM)


def _measurement(box: Box) -> np.ndarray:
    return np.array(
        [
            box.left + box.width / 2.0,
            box.top + box.height / 2.0,
            box.width / box.height,
            box.height,
        ]
    )


def state_to_box(s: KalmanState) -> Box:
    cx, cy, aspect, h = s.mean[:4]
    w = aspect * h
    return Box(cx - w / 2.0, cy - h / 2.0, w, h)


def kf_init(box: Box, cfg: KalmanConfig | None = None) -> KalmanState:
    """Initial state from one box: zero velocities, height-scaled spread."""
    if box.width <= 0 or box.height <= 0:
        raise ValueError("box extents must be positive")
    cfg = cfg or KalmanConfig()
    mean = np.zeros(_DIM)
    mean[:4] = _measurement(box)
    h = box.height
    sp, sv = cfg.std_weight_position, cfg.std_weight_velocity
    std = np.array(
        [2 * sp * h, 2 * sp * h, 1e-2, 2 * sp * h,
         10 * sv * h, 10 * sv * h, 1e-5, 10 * sv * h]
    )
    return KalmanState(mean=mean, cov=np.diag(std**2))


def _process_noise(h: float, cfg: KalmanConfig) -> np.ndarray:
    sp, sv = cfg.std_weight_position, cfg.std_weight_velocity
    std = np.array(
        [sp * h, sp * h, 1e-2, sp * h, sv * h, sv * h, 1e-5, sv * h]
    )
    return np.diag(std**2)


def _measurement_noise(h: float, cfg: KalmanConfig) -> np.ndarray:
    sp = cfg.std_weight_position
    std = np.array([sp * h, sp * h, 1e-1, sp * h])
    return np.diag(std**2)


def kf_predict(s: KalmanState, cfg: KalmanConfig | None = None) -> KalmanState:
    """Advance one frame: mean moves by its velocity, covariance grows."""
    cfg = cfg or KalmanConfig()
    mean = _F @ s.mean
    cov = _F @ s.cov @ _F.T + _process_noise(s.mean[3], cfg)
    return KalmanState(mean=mean, cov=(cov + cov.T) / 2.0)


def kf_update(
    s: KalmanState, measured: Box, cfg: KalmanConfig | None = None
) -> KalmanState:
    """Standard gain-weighted correction toward the measured box."""
    if measured.width <= 0 or measured.height <= 0:
        raise ValueError("box extents must be positive")
    cfg = cfg or KalmanConfig()
    z = _measurement(measured)
    innovation_cov = _H @ s.cov @ _H.T + _measurement_noise(s.mean[3], cfg)
    try:
        chol = np.linalg.cholesky(innovation_cov)
    except np.linalg.LinAlgError:
        raise ValueError("singular innovation covariance") from None
    gain = np.linalg.solve(
        chol.T, np.linalg.solve(chol, (s.cov @ _H.T).T)
    ).T
    mean = s.mean + gain @ (z - _H @ s.mean)
    cov = (np.eye(_DIM) - gain @ _H) @ s.cov
    return KalmanState(mean=mean, cov=(cov + cov.T) / 2.0)


def propagate_none(t: Tracklet) -> Box:
    """Frozen-box propagation: the previous box, unchanged."""
    return t.box


class FrozenBoxPropagator:
    """The 'none' motion model: tracking boxes never move."""

    def propagate(
        self, frame: Frame, tracklets: Sequence[Tracklet]
    ) -> list[Propagation]:
        return [
            Propagation(t.id, propagate_none(t), t.score, payload=t.payload)
            for t in tracklets
        ]

    def init_payload(self, det: Detection):
        return None

    def update_payload(self, payload, det: Detection):
        return None


class KalmanPropagator:
    """Constant-velocity Kalman motion model used as a tracker provider.

    The tracklet payload is the filter state: predicted during propagation,
    corrected with the matched detection box.
    """

    def __init__(self, cfg: KalmanConfig | None = None):
        self.cfg = cfg or KalmanConfig()

    def propagate(
        self, frame: Frame, tracklets: Sequence[Tracklet]
    ) -> list[Propagation]:
        out = []
        for t in tracklets:
            state = kf_predict(t.payload, self.cfg)
            out.append(Propagation(t.id, state_to_box(state), t.score, payload=state))
        return out

    def init_payload(self, det: Detection) -> KalmanState:
        return kf_init(det.box, self.cfg)

    def update_payload(self, payload: KalmanState, det: Detection) -> KalmanState:
        return kf_update(payload, det.box, self.cfg)
