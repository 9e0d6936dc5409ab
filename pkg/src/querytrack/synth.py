"""Deterministic synthetic scenarios: ground-truth trajectories, noisy
detections, feature grids for the toy network, and static-frame
perturbation pairs for training.

All randomness flows from SplitMix64 (Steele, Lea & Flood 2014), a 64-bit
generator defined purely by integer constants, so any implementation
reproduces identical scenarios from the same seed. Objects live in
horizontal lanes (one per object), which keeps trajectories of distinct
identities disjoint; motion is linear or sinusoidal with reflection at
the image border.

Draw order in `generate`, per object index: width, height, start x,
direction, speed, then (sinusoidal only) amplitude, period, phase. Then
per frame and per visible object: one miss draw, then four jitter normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import Box
from .io import AnnotationEntry, FrameAnnotations

_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64: state += 0x9E3779B97F4A7C15, output mixed by two
    xor-shift-multiply rounds (0xBF58476D1CE4E5B9, 0x94D049BB133111EB)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_raw(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53-bit mantissa in [0, 1).
        u = (self.next_raw() >> 11) / float(1 << 53)
        return lo + u * (hi - lo)

    def normal(self, sigma: float = 1.0) -> float:
        # Box-Muller, cosine branch; two raws per draw.
        u1 = ((self.next_raw() >> 11) + 1) / float((1 << 53) + 1)
        u2 = (self.next_raw() >> 11) / float(1 << 53)
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def next_below(self, n: int) -> int:
        return int(self.uniform() * n)


@dataclass(frozen=True)
class ScenarioSpec:
    image_w: int = 512
    image_h: int = 512
    length: int = 40
    num_objects: int = 3
    motion: str = "linear"  # linear | sinusoidal
    speed_min: float = 0.5
    speed_max: float = 2.5
    size_min: float = 40.0
    size_max: float = 90.0
    center_std: float = 0.0
    size_std: float = 0.0
    miss_prob: float = 0.0
    births: dict[int, int] = field(default_factory=dict)  # 1-based object -> frame
    deaths: dict[int, int] = field(default_factory=dict)
    occlusions: tuple[tuple[int, int, int], ...] = ()  # (object, start, end)
    feature_grid: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.image_w <= 0 or self.image_h <= 0 or self.length < 1:
            raise ValueError("image size and length must be positive")
        if self.num_objects < 0:
            raise ValueError("num_objects must be >= 0")
        if self.motion not in ("linear", "sinusoidal"):
            raise ValueError(f"unknown motion {self.motion!r}")
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ValueError("miss_prob must lie in [0, 1]")
        if self.center_std < 0 or self.size_std < 0:
            raise ValueError("noise stds must be >= 0")
        for i in range(1, self.num_objects + 1):
            birth, death = self.birth_of(i), self.death_of(i)
            if not 1 <= birth < death <= self.length:
                raise ValueError(
                    f"object {i}: need 1 <= birth < death <= length, "
                    f"got {birth}..{death} in {self.length}"
                )
        for obj, start, end in self.occlusions:
            if not (1 <= obj <= self.num_objects and 1 <= start <= end <= self.length):
                raise ValueError(f"bad occlusion window {(obj, start, end)}")

    def birth_of(self, obj: int) -> int:
        return self.births.get(obj, 1)

    def death_of(self, obj: int) -> int:
        return self.deaths.get(obj, self.length)

    def occluded(self, obj: int, frame: int) -> bool:
        return any(
            o == obj and start <= frame <= end for o, start, end in self.occlusions
        )


@dataclass
class _ObjectTrack:
    obj_id: int
    w: float
    h: float
    x0: float
    direction: float
    speed: float
    lane_y: float
    amp: float = 0.0
    period: float = 20.0
    phase: float = 0.0


def _fold(p: float, lo: float, hi: float) -> float:
    """Reflect p into [lo, hi] (triangle wave)."""
    if hi <= lo:
        return lo
    period = 2.0 * (hi - lo)
    q = (p - lo) % period
    return lo + (period - q if q > hi - lo else q)


def _sample_tracks(spec: ScenarioSpec, rng: SplitMix64) -> list[_ObjectTrack]:
    n = spec.num_objects
    if n == 0:
        return []
    lane_h = spec.image_h / n
    tracks = []
    for i in range(n):
        w = rng.uniform(spec.size_min, min(spec.size_max, spec.image_w / 3))
        h = rng.uniform(spec.size_min, min(spec.size_max, 0.85 * lane_h))
        h = min(h, 0.85 * lane_h)
        x0 = rng.uniform(w / 2, spec.image_w - w / 2)
        direction = 1.0 if rng.next_raw() & 1 else -1.0
        speed = rng.uniform(spec.speed_min, spec.speed_max)
        t = _ObjectTrack(
            obj_id=i + 1,
            w=w,
            h=h,
            x0=x0,
            direction=direction,
            speed=speed,
            lane_y=(i + 0.5) * lane_h,
        )
        if spec.motion == "sinusoidal":
            amp_max = max(0.0, 0.4 * (lane_h - h))
            t.amp = rng.uniform(0.0, amp_max)
            t.period = rng.uniform(10.0, 30.0)
            t.phase = rng.uniform(0.0, 2.0 * math.pi)
        tracks.append(t)
    return tracks


def _box_at(t: _ObjectTrack, spec: ScenarioSpec, frame: int) -> Box:
    steps = frame - spec.birth_of(t.obj_id)
    cx = _fold(
        t.x0 + t.direction * t.speed * steps, t.w / 2, spec.image_w - t.w / 2
    )
    cy = t.lane_y
    if spec.motion == "sinusoidal":
        cy += t.amp * math.sin(2.0 * math.pi * steps / t.period + t.phase)
    return Box(cx - t.w / 2, cy - t.h / 2, t.w, t.h)


def featurize(
    boxes: Sequence[Box], image_size: tuple[float, float], grid: int
) -> np.ndarray:
    """Paint boxes on a (grid, grid, 3) array: anisotropic Gaussian blob
    amplitude plus two channels of normalized cell-center coordinates."""
    img_w, img_h = image_size
    feat = np.zeros((grid, grid, 3))
    ys = (np.arange(grid) + 0.5) / grid
    xs = (np.arange(grid) + 0.5) / grid
    feat[:, :, 1] = xs[None, :]
    feat[:, :, 2] = ys[:, None]
    for box in boxes:
        cx = (box.left + box.width / 2) / img_w
        cy = (box.top + box.height / 2) / img_h
        sx = max(box.width / img_w / 2.0, 0.55 / grid)
        sy = max(box.height / img_h / 2.0, 0.55 / grid)
        gx = np.exp(-0.5 * ((xs - cx) / sx) ** 2)
        gy = np.exp(-0.5 * ((ys - cy) / sy) ** 2)
        feat[:, :, 0] += gy[:, None] * gx[None, :]
    return feat


def generate(
    spec: ScenarioSpec,
) -> tuple[list[FrameAnnotations], list[FrameAnnotations], list[np.ndarray]]:
    """Build (ground truth, noisy detections, feature grids) for a scenario.

    Ground truth follows the sampled trajectories exactly; detections are
    jittered copies, dropped inside occlusion windows and with the miss
    probability. Occluded objects keep their GT row with visibility 0 and
    are not painted into the feature grid.
    """
    rng = SplitMix64(spec.seed)
    tracks = _sample_tracks(spec, rng)
    gt: list[FrameAnnotations] = []
    det: list[FrameAnnotations] = []
    feats: list[np.ndarray] = []
    size = (float(spec.image_w), float(spec.image_h))
    for frame in range(1, spec.length + 1):
        gt_entries: list[AnnotationEntry] = []
        det_entries: list[AnnotationEntry] = []
        visible_boxes: list[Box] = []
        for t in tracks:
            if not spec.birth_of(t.obj_id) <= frame <= spec.death_of(t.obj_id):
                continue
            box = _box_at(t, spec, frame)
            occluded = spec.occluded(t.obj_id, frame)
            gt_entries.append(
                AnnotationEntry(
                    t.obj_id, box, 1.0, 1, 0.0 if occluded else 1.0
                )
            )
            if occluded:
                continue
            visible_boxes.append(box)
            if rng.uniform() < spec.miss_prob:
                continue
            dx = rng.normal(spec.center_std)
            dy = rng.normal(spec.center_std)
            dw = rng.normal(spec.size_std)
            dh = rng.normal(spec.size_std)
            det_entries.append(
                AnnotationEntry(
                    -1,
                    Box(
                        box.left + dx,
                        box.top + dy,
                        max(2.0, box.width + dw),
                        max(2.0, box.height + dh),
                    ),
                    1.0,
                )
            )
        gt.append(FrameAnnotations(frame, gt_entries))
        det.append(FrameAnnotations(frame, det_entries))
        feats.append(featurize(visible_boxes, size, spec.feature_grid))
    return gt, det, feats


def perturb_static(
    annotations: FrameAnnotations,
    features: np.ndarray,
    image_size: tuple[float, float],
    scale_range: tuple[float, float] = (0.95, 1.05),
    translate_range: tuple[float, float] = (10.0, 10.0),
    seed: int = 0,
) -> tuple[FrameAnnotations, np.ndarray]:
    """Simulate an adjacent frame by one random scale+translation.

    The draw (scale, then tx, then ty) applies to every box about the image
    center; boxes are clipped to the image and dropped once fully outside.
    The feature grid is repainted from the transformed boxes.
    """
    rng = SplitMix64(seed)
    s = rng.uniform(*scale_range)
    tx = rng.uniform(-translate_range[0], translate_range[0])
    ty = rng.uniform(-translate_range[1], translate_range[1])
    img_w, img_h = image_size
    # Scale about the image center written as c*s + offset so the identity
    # transform is bit-exact.
    ox = img_w / 2 * (1.0 - s) + tx
    oy = img_h / 2 * (1.0 - s) + ty
    entries = []
    for e in annotations.entries:
        l_raw, t_raw = e.box.left * s + ox, e.box.top * s + oy
        r_raw, b_raw = e.box.right * s + ox, e.box.bottom * s + oy
        left, top = max(0.0, l_raw), max(0.0, t_raw)
        right, bottom = min(float(img_w), r_raw), min(float(img_h), b_raw)
        if right - left <= 0.0 or bottom - top <= 0.0:
            continue  # fully clipped out
        # Unclipped extents keep width*s exactly (identity stays bit-exact).
        w = e.box.width * s if (left == l_raw and right == r_raw) else right - left
        h = e.box.height * s if (top == t_raw and bottom == b_raw) else bottom - top
        entries.append(replace(e, box=Box(left, top, w, h)))
    out = FrameAnnotations(annotations.frame, entries)
    grid = features.shape[0]
    visible = [e.box for e in entries if e.visibility > 0.0]
    return out, featurize(visible, image_size, grid)


def skip_sample(sequence: Sequence, stride: int) -> list:
    """Keep frames 1, 1+stride, 1+2*stride, ... and renumber densely.

    Works on FrameAnnotations sequences (renumbered) and on plain
    per-frame lists such as feature grids (subsampled only).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    kept = list(sequence)[::stride]
    out = []
    for i, item in enumerate(kept):
        if isinstance(item, FrameAnnotations):
            out.append(FrameAnnotations(i + 1, item.entries))
        else:
            out.append(item)
    return out


@dataclass
class TrainingPair:
    """A static frame and its simulated adjacent frame."""

    feat1: np.ndarray
    boxes1: list[Box]
    ids1: list[int]
    feat2: np.ndarray
    boxes2: list[Box]
    ids2: list[int]
    image_size: tuple[float, float]


def make_training_pairs(
    num_pairs: int,
    seed: int,
    image_size: tuple[int, int] = (512, 512),
    max_objects: int = 3,
    size_range: tuple[float, float] = (90.0, 170.0),
    scale_range: tuple[float, float] = (0.95, 1.05),
    translate_range: tuple[float, float] = (15.0, 15.0),
    feature_grid: int = 8,
) -> list[TrainingPair]:
    """Static-scene perturbation pairs for training the toy network."""
    master = SplitMix64(seed)
    pairs = []
    for _ in range(num_pairs):
        scene_seed = master.next_raw()
        perturb_seed = master.next_raw()
        n_obj = 1 + master.next_below(max_objects)
        spec = ScenarioSpec(
            image_w=image_size[0],
            image_h=image_size[1],
            length=2,
            num_objects=n_obj,
            size_min=size_range[0],
            size_max=size_range[1],
            feature_grid=feature_grid,
            seed=scene_seed,
        )
        gt, _, feats = generate(spec)
        annos2, feat2 = perturb_static(
            gt[0], feats[0], (float(image_size[0]), float(image_size[1])),
            scale_range, translate_range, perturb_seed,
        )
        pairs.append(
            TrainingPair(
                feat1=feats[0],
                boxes1=[e.box for e in gt[0].entries],
                ids1=[e.id for e in gt[0].entries],
                feat2=feat2,
                boxes2=[e.box for e in annos2.entries],
                ids2=[e.id for e in annos2.entries],
                image_size=(float(image_size[0]), float(image_size[1])),
            )
        )
    return pairs


_SPEC_INT_KEYS = {
    "image_w", "image_h", "length", "num_objects", "feature_grid", "seed"
}
_SPEC_FLOAT_KEYS = {
    "speed_min", "speed_max", "size_min", "size_max",
    "center_std", "size_std", "miss_prob",
}


def spec_to_text(spec: ScenarioSpec) -> str:
    """Serialize a scenario spec as a flat key=value file."""
    lines = []
    for key in sorted(_SPEC_INT_KEYS):
        lines.append(f"{key}={getattr(spec, key)}")
    lines.append(f"motion={spec.motion}")
    for key in sorted(_SPEC_FLOAT_KEYS):
        lines.append(f"{key}={getattr(spec, key)!r}")
    for obj in sorted(spec.births):
        lines.append(f"birth_{obj}={spec.births[obj]}")
    for obj in sorted(spec.deaths):
        lines.append(f"death_{obj}={spec.deaths[obj]}")
    for obj, start, end in spec.occlusions:
        lines.append(f"occlusion_{obj}={start}:{end}")
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> ScenarioSpec:
    """Parse the flat key=value scenario format; unknown keys are rejected."""
    kwargs: dict = {}
    births: dict[int, int] = {}
    deaths: dict[int, int] = {}
    occlusions: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _SPEC_INT_KEYS:
            kwargs[key] = int(value)
        elif key in _SPEC_FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key == "motion":
            kwargs[key] = value
        elif key.startswith("birth_"):
            births[int(key[6:])] = int(value)
        elif key.startswith("death_"):
            deaths[int(key[6:])] = int(value)
        elif key.startswith("occlusion_"):
            for window in value.split(";"):
                start, end = window.split(":")
                occlusions.append((int(key[10:]), int(start), int(end)))
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return ScenarioSpec(
        births=births, deaths=deaths, occlusions=tuple(occlusions), **kwargs
    )
