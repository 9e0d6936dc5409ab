"""Joint-detection-and-tracking state machine.

Per frame, detection boxes are associated to the tracking boxes of live
tracklets (Kuhn-Munkres on IoU, or NMS merging). Matched tracklets take
the detection box and keep their identity; unmatched tracklets become
inactive and survive up to `rebirth_k` frames, during which a detection
can still regain the old id; unmatched detections spawn new identities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable, Optional, Protocol, Sequence

import numpy as np

from .assignment import match_by_iou, nms_suppressors
from .geometry import Box


class TrackState(enum.Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"


@dataclass
class Tracklet:
    id: int
    box: Box
    score: float
    state: TrackState = TrackState.ACTIVE
    inactive_count: int = 0
    payload: Any = None  # track-query vector, Kalman state, ...
    slot: Optional[int] = None  # query-slot id for index association


@dataclass(frozen=True)
class TrackerConfig:
    rebirth_k: int = 32
    min_iou: float = 0.3
    association: str = "hungarian"  # hungarian | nms
    score_thresh: float = 0.5
    query_mode: str = "both"  # both | detection_only_index | track_only

    def __post_init__(self):
        if self.rebirth_k < 0:
            raise ValueError("rebirth_k must be >= 0")
        if not (0.0 <= self.min_iou <= 1.0 and 0.0 <= self.score_thresh <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.association not in ("hungarian", "nms"):
            raise ValueError(f"unknown association {self.association!r}")
        if self.query_mode not in ("both", "detection_only_index", "track_only"):
            raise ValueError(f"unknown query_mode {self.query_mode!r}")


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    class_probs: Optional[np.ndarray] = None
    feature: Optional[np.ndarray] = None
    slot: Optional[int] = None


@dataclass(frozen=True)
class Propagation:
    """A live tracklet's refreshed tracking box (and payload) for this frame."""

    track_id: int
    box: Box
    score: float
    payload: Any = None


@dataclass(frozen=True)
class TrackOutput:
    id: int
    box: Box
    score: float


@dataclass(frozen=True)
class Frame:
    """Per-frame provider input; previous features duplicate the current
    ones on the first frame."""

    index: int  # 1-based
    features: Optional[np.ndarray] = None
    prev_features: Optional[np.ndarray] = None


class Detector(Protocol):
    def detect(self, frame: Frame) -> list[Detection]: ...


class Propagator(Protocol):
    def propagate(
        self, frame: Frame, tracklets: Sequence[Tracklet]
    ) -> list[Propagation]: ...


class ProviderError(RuntimeError):
    """Detector/propagator failure, annotated with the frame index."""

    def __init__(self, frame_index: int, cause: BaseException):
        super().__init__(f"provider failed at frame {frame_index}: {cause}")
        self.frame_index = frame_index


def _default_init_payload(det: Detection):
    return det.feature


def _default_update_payload(payload, det: Detection):
    return det.feature if det.feature is not None else payload


class Tracker:
    """Mutable per-sequence tracking state; one instance per sequence."""

    def __init__(
        self,
        cfg: TrackerConfig | None = None,
        init_payload: Callable[[Detection], Any] | None = None,
        update_payload: Callable[[Any, Detection], Any] | None = None,
    ):
        self.cfg = cfg or TrackerConfig()
        self.tracklets: dict[int, Tracklet] = {}
        self._next_id = 1
        self._frames_seen = 0
        self._init_payload = init_payload or _default_init_payload
        self._update_payload = update_payload or _default_update_payload

    def live(self) -> list[Tracklet]:
        return [self.tracklets[k] for k in sorted(self.tracklets)]

    def active(self) -> list[Tracklet]:
        return [t for t in self.live() if t.state is TrackState.ACTIVE]

    def _spawn(self, det: Detection) -> Tracklet:
        t = Tracklet(
            id=self._next_id,
            box=det.box,
            score=det.score,
            payload=self._init_payload(det),
            slot=det.slot,
        )
        self._next_id += 1
        self.tracklets[t.id] = t
        return t

    def step(
        self,
        detections: Sequence[Detection],
        propagations: Sequence[Propagation] = (),
    ) -> list[TrackOutput]:
        """Advance one frame; returns the active tracklets after the update."""
        cfg = self.cfg
        self._frames_seen += 1
        for prop in propagations:
            t = self.tracklets.get(prop.track_id)
            if t is None:
                raise ValueError(
                    f"propagation references unknown tracklet {prop.track_id}"
                )
            t.box = prop.box
            t.score = prop.score
            t.payload = prop.payload

        dets = [d for d in detections if d.score >= cfg.score_thresh]
        live = self.live()  # inactive boxes stay frozen and still participate

        if cfg.query_mode == "detection_only_index":
            matches, spawn_dets = self._associate_by_slot(dets, live)
        elif cfg.association == "nms":
            matches, spawn_dets = self._associate_nms(dets, live)
        else:
            matches, spawn_dets = self._associate_hungarian(dets, live)

        matched_ids = set()
        for det, t in matches:
            t.state = TrackState.ACTIVE
            t.inactive_count = 0
            t.box = det.box
            t.score = det.score
            t.payload = self._update_payload(t.payload, det)
            if det.slot is not None:
                t.slot = det.slot
            matched_ids.add(t.id)

        for t in live:
            if t.id in matched_ids:
                continue
            t.state = TrackState.INACTIVE
            t.inactive_count += 1
            if t.inactive_count > cfg.rebirth_k:
                del self.tracklets[t.id]

        if cfg.query_mode != "track_only" or self._frames_seen == 1:
            for det in spawn_dets:
                self._spawn(det)

        return [
            TrackOutput(t.id, t.box, t.score)
            for t in self.active()
        ]

    def _associate_hungarian(self, dets, live):
        if not dets or not live:
            return [], list(dets)
        a = match_by_iou([d.box for d in dets], [t.box for t in live], self.cfg.min_iou)
        matches = [(dets[r], live[c]) for r, c in a.pairs]
        spawn = [dets[r] for r in a.unmatched_rows]
        return matches, spawn

    def _associate_nms(self, dets, live):
        """CenterTrack-style merging: pool tracking and detection boxes,
        suppress duplicates, pair each suppressed box with its suppressor
        across the two pools; surviving unpaired detections spawn."""
        if not dets or not live:
            return [], list(dets)
        pool = [(t.box, t.score) for t in live] + [(d.box, d.score) for d in dets]
        n_live = len(live)
        _, suppressor = nms_suppressors(pool, self.cfg.min_iou)
        order = sorted(
            range(len(pool)), key=lambda k: (-pool[k][1], k)
        )  # NMS visiting order
        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        dropped_dets: set[int] = set()
        matches = []
        for k in order:
            s = suppressor[k]
            if s < 0:
                continue
            if k < n_live and s >= n_live:  # track suppressed by detection
                ti, di = k, s - n_live
            elif k >= n_live and s < n_live:  # detection suppressed by track
                ti, di = s, k - n_live
            elif k >= n_live and s >= n_live:  # duplicate detection
                dropped_dets.add(k - n_live)
                continue
            else:  # track suppressed by track: both simply stay unmatched
                continue
            if ti not in matched_tracks and di not in matched_dets:
                matched_tracks.add(ti)
                matched_dets.add(di)
                matches.append((dets[di], live[ti]))
            elif k >= n_live:
                # Detection suppressed by a track that already has its
                # match: a duplicate of an explained object.
                dropped_dets.add(di)
        spawn = [
            d
            for i, d in enumerate(dets)
            if i not in matched_dets and i not in dropped_dets
        ]
        return matches, spawn

    def _associate_by_slot(self, dets, live):
        """Naive index association: a detection continues the tracklet that
        owns the same query slot."""
        by_slot: dict[int, Tracklet] = {}
        for t in live:
            if t.slot is None:
                continue
            cur = by_slot.get(t.slot)
            # Prefer the active tracklet, then the lowest id.
            if cur is None or (
                cur.state is not TrackState.ACTIVE and t.state is TrackState.ACTIVE
            ):
                by_slot[t.slot] = t
        matches = []
        spawn = []
        used: set[int] = set()
        for det in sorted(dets, key=lambda d: -d.score):
            if det.slot is None:
                raise ValueError("index association requires detection slots")
            t = by_slot.get(det.slot)
            if t is not None and t.id not in used:
                used.add(t.id)
                matches.append((det, t))
            else:
                spawn.append(det)
        return matches, spawn


def run_sequence(
    features: Sequence[Optional[np.ndarray]],
    detector: Detector,
    propagator: Optional[Propagator],
    cfg: TrackerConfig | None = None,
) -> list[list[TrackOutput]]:
    """Track a whole sequence frame by frame.

    Frame 1 runs detection only (its previous-frame features are a copy of
    itself); afterwards the propagator produces tracking boxes for active
    tracklets while inactive ones keep their frozen box. Provider failures
    are re-raised as ProviderError with the frame index.
    """
    init_payload = getattr(propagator, "init_payload", None)
    update_payload = getattr(propagator, "update_payload", None)
    tracker = Tracker(cfg, init_payload=init_payload, update_payload=update_payload)
    outputs: list[list[TrackOutput]] = []
    prev: Optional[np.ndarray] = None
    for idx, feat in enumerate(features, start=1):
        frame = Frame(idx, feat, feat if prev is None else prev)
        try:
            dets = detector.detect(frame)
            active = tracker.active()
            props = propagator.propagate(frame, active) if propagator and active else []
        except Exception as exc:
            raise ProviderError(idx, exc) from exc
        outputs.append(tracker.step(dets, props))
        prev = feat
    return outputs
