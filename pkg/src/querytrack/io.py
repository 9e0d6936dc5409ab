"""MOTChallenge-format ingestion and emission, plus replay providers that
feed recorded detections into the tracker.

Lines are ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,<x>,<y>,<z>``;
ground-truth files carry the class id in field 8 and visibility in field 9.
"""

from __future__ import annotations

import io as _stdio
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .geometry import Box
from .tracker import Detection, Frame, Propagation


@dataclass(frozen=True)
class AnnotationEntry:
    id: int  # -1 for raw detections
    box: Box
    conf: float = 1.0
    class_id: int = 1
    visibility: float = 1.0


@dataclass
class FrameAnnotations:
    frame: int  # 1-based
    entries: list[AnnotationEntry] = field(default_factory=list)


class MotFormatError(ValueError):
    """Malformed MOT file content, annotated with the line number."""


def _as_stream(source: str | IO[str]) -> IO[str]:
    if isinstance(source, str):
        return _stdio.StringIO(source)
    return source


def parse_mot(
    source: str | IO[str],
    kind: str = "gt",
    min_visibility: float = 0.0,
    pedestrian_only: bool = True,
) -> list[FrameAnnotations]:
    """Parse a MOT CSV stream into per-frame annotations, frames ascending.

    `kind` is one of gt/det/result. Ground-truth rows are filtered to the
    pedestrian class (1) and to `visibility >= min_visibility`; detection
    rows get id -1. The returned list densely covers frames 1..max.
    """
    if kind not in ("gt", "det", "result"):
        raise ValueError(f"unknown kind {kind!r}")
    per_frame: dict[int, list[AnnotationEntry]] = {}
    seen: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(_as_stream(source), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        want = 9 if kind == "gt" else 7
        if len(parts) < want:
            raise MotFormatError(f"line {lineno}: expected >= {want} fields")
        try:
            frame = int(float(parts[0]))
            obj_id = int(float(parts[1]))
            box = Box(*(float(p) for p in parts[2:6]))
            conf = float(parts[6])
            class_id = int(float(parts[7])) if len(parts) > 7 else 1
            visibility = float(parts[8]) if len(parts) > 8 else 1.0
        except ValueError as exc:
            raise MotFormatError(f"line {lineno}: {exc}") from None
        if frame < 1:
            raise MotFormatError(f"line {lineno}: frame must be >= 1")
        if kind == "det":
            obj_id = -1
        if kind == "gt":
            if pedestrian_only and class_id != 1:
                continue
            if visibility < min_visibility:
                continue
        if obj_id != -1:
            key = (frame, obj_id)
            if key in seen:
                raise MotFormatError(f"line {lineno}: duplicate (frame, id) {key}")
            seen.add(key)
        per_frame.setdefault(frame, []).append(
            AnnotationEntry(obj_id, box, conf, class_id, visibility)
        )
    if not per_frame:
        return []
    last = max(per_frame)
    return [FrameAnnotations(f, per_frame.get(f, [])) for f in range(1, last + 1)]


def write_results(sequence: Iterable[FrameAnnotations]) -> str:
    """Serialize tracker output to MOT result format.

    One line per box: ``frame,id,left,top,w,h,conf,-1,-1,-1`` with fixed
    2-decimal coordinates, frames ascending and ids ascending inside a frame.
    """
    lines = []
    for fa in sorted(sequence, key=lambda f: f.frame):
        for e in sorted(fa.entries, key=lambda e: e.id):
            if e.id < 1:
                raise ValueError(f"frame {fa.frame}: result ids must be >= 1")
            lines.append(
                f"{fa.frame},{e.id},{e.box.left:.2f},{e.box.top:.2f},"
                f"{e.box.width:.2f},{e.box.height:.2f},{e.conf:.2f},-1,-1,-1"
            )
    return "\n".join(lines) + ("\n" if lines else "")


def write_gt(sequence: Iterable[FrameAnnotations]) -> str:
    """Serialize ground truth with class and visibility fields."""
    lines = []
    for fa in sorted(sequence, key=lambda f: f.frame):
        for e in sorted(fa.entries, key=lambda e: e.id):
            lines.append(
                f"{fa.frame},{e.id},{e.box.left:.2f},{e.box.top:.2f},"
                f"{e.box.width:.2f},{e.box.height:.2f},{e.conf:.2f},"
                f"{e.class_id},{e.visibility:.2f}"
            )
    return "\n".join(lines) + ("\n" if lines else "")


def write_detections(sequence: Iterable[FrameAnnotations]) -> str:
    """Serialize raw detections (id fixed at -1)."""
    lines = []
    for fa in sorted(sequence, key=lambda f: f.frame):
        for e in fa.entries:
            lines.append(
                f"{fa.frame},-1,{e.box.left:.2f},{e.box.top:.2f},"
                f"{e.box.width:.2f},{e.box.height:.2f},{e.conf:.2f},-1,-1,-1"
            )
    return "\n".join(lines) + ("\n" if lines else "")


class ReplayDetector:
    """Serves recorded per-frame detections as the tracker's detector."""

    def __init__(self, frames: Sequence[FrameAnnotations]):
        self._frames = {fa.frame: fa for fa in frames}
        self._last = max(self._frames) if self._frames else 0

    def __len__(self) -> int:
        return self._last

    def detect(self, frame: Frame) -> list[Detection]:
        if frame.index < 1 or frame.index > self._last:
            raise IndexError(
                f"frame {frame.index} outside recorded range 1..{self._last}"
            )
        fa = self._frames.get(frame.index)
        if fa is None:
            return []
        return [Detection(box=e.box, score=e.conf) for e in fa.entries]


class SlottedReplayDetector(ReplayDetector):
    """Replay detector that tags detections with a query-slot index.

    Slots mimic spatially specialized object queries: each detection is
    assigned the nearest of `num_slots` anchor points laid out on a grid.
    Used by the detection-only index-association ablation.
    """

    def __init__(
        self,
        frames: Sequence[FrameAnnotations],
        image_size: tuple[float, float],
        num_slots: int = 10,
    ):
        super().__init__(frames)
        self._anchors = _slot_anchors(num_slots, image_size)

    def detect(self, frame: Frame) -> list[Detection]:
        out = []
        for det in super().detect(frame):
            cx = det.box.left + det.box.width / 2
            cy = det.box.top + det.box.height / 2
            slot = min(
                range(len(self._anchors)),
                key=lambda k: (self._anchors[k][0] - cx) ** 2
                + (self._anchors[k][1] - cy) ** 2,
            )
            out.append(Detection(det.box, det.score, slot=slot))
        return out


def _slot_anchors(num_slots: int, image_size: tuple[float, float]):
    w, h = image_size
    cols = max(1, int(num_slots**0.5))
    rows = (num_slots + cols - 1) // cols
    anchors = []
    for k in range(num_slots):
        r, c = divmod(k, cols)
        anchors.append(((c + 0.5) * w / cols, (r + 0.5) * h / rows))
    return anchors


def replay_provider(frames: Sequence[FrameAnnotations]) -> ReplayDetector:
    """Detector over recorded (det-kind) annotations; conf becomes the score."""
    return ReplayDetector(frames)


def annotations_from_outputs(outputs) -> list[FrameAnnotations]:
    """Convert tracker per-frame outputs into writable annotations."""
    return [
        FrameAnnotations(
            frame=i + 1,
            entries=[AnnotationEntry(t.id, t.box, t.score) for t in frame_out],
        )
        for i, frame_out in enumerate(outputs)
    ]
