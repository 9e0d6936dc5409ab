"""Desk-scale encoder/two-decoder attention network.

Learned object queries decode detection boxes; track queries (output
features of previously detected objects) decode tracking boxes against the
same encoder memory built from two consecutive feature-grid frames. The
whole forward pass runs on a tiny autodiff tape, so training uses exact
analytic gradients of the set-prediction loss, verifiable against central
finite differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from . import _tape as T
from .assignment import Assignment
from .geometry import Box, CenterBox
from .losses import GroundTruth, LossWeights, Prediction, optimal_match
from .synth import SplitMix64, TrainingPair
from .tracker import Detection, Frame, Propagation, Tracklet

_LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    grid_h: int = 8
    grid_w: int = 8
    in_channels: int = 3
    d_model: int = 32
    ffn_dim: int = 64
    enc_layers: int = 1
    dec_layers: int = 2
    num_queries: int = 10
    num_classes: int = 1
    share_decoder_weights: bool = False

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, value = line.split("=", 1)
            if key not in types:
                raise ValueError(f"unknown model config key {key!r}")
            kwargs[key] = value == "True" if key == "share_decoder_weights" else int(value)
        return cls(**kwargs)


# A tiny configuration whose full parameter set stays enumerable, used for
# exhaustive finite-difference gradient checks.
GRADCHECK_CONFIG = ModelConfig(
    grid_h=4,
    grid_w=4,
    d_model=8,
    ffn_dim=16,
    enc_layers=1,
    dec_layers=1,
    num_queries=3,
)


def sinusoidal_grid_encoding(grid_h: int, grid_w: int, d: int) -> np.ndarray:
    """Fixed 2D sinusoidal position features, (H*W, d); the first half of
    the channels encodes the row coordinate, the second half the column."""
    half = d // 2
    n_freq = max(1, half // 2)
    freqs = math.pi * (2.0 ** np.arange(n_freq))
    out = np.zeros((grid_h * grid_w, d))
    for r in range(grid_h):
        for c in range(grid_w):
            i = r * grid_w + c
            ay = (r + 0.5) / grid_h * freqs
            ax = (c + 0.5) / grid_w * freqs
            out[i, 0:half:2] = np.sin(ay)
            out[i, 1:half:2] = np.cos(ay)
            out[i, half::2] = np.sin(ax)
            out[i, half + 1 :: 2] = np.cos(ax)
    return out


def _attn_names(prefix: str) -> list[str]:
    return [f"{prefix}.{n}" for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]


def _layer_prefixes(cfg: ModelConfig) -> list[tuple[str, str]]:
    """(name, kind) pairs declaring every parameter tensor in order."""
    d, f, c = cfg.d_model, cfg.ffn_dim, cfg.num_classes
    decl: list[tuple[str, str]] = [
        ("input_w", "mat_in"),
        ("input_b", "vec_d"),
        ("query_embed", "queries"),
        ("frame_embed", "frames"),
    ]

    def attn(prefix):
        for name in _attn_names(prefix):
            decl.append((name, "vec_d" if ".b" in name else "mat_dd"))

    def ln(prefix):
        decl.append((f"{prefix}.g", "ones_d"))
        decl.append((f"{prefix}.b", "vec_d"))

    def ffn(prefix):
        decl.append((f"{prefix}.w1", "mat_df"))
        decl.append((f"{prefix}.b1", "vec_f"))
        decl.append((f"{prefix}.w2", "mat_fd"))
        decl.append((f"{prefix}.b2", "vec_d"))

    for i in range(cfg.enc_layers):
        ln(f"enc{i}.ln1")
        attn(f"enc{i}.attn")
        ln(f"enc{i}.ln2")
        ffn(f"enc{i}.ffn")
    if cfg.enc_layers:
        ln("enc.ln_out")
    sides = ["det"] if cfg.share_decoder_weights else ["det", "track"]
    for side in sides:
        for i in range(cfg.dec_layers):
            ln(f"{side}{i}.ln1")
            attn(f"{side}{i}.self")
            ln(f"{side}{i}.ln2")
            attn(f"{side}{i}.cross")
            ln(f"{side}{i}.ln3")
            ffn(f"{side}{i}.ffn")
        if cfg.dec_layers:
            ln(f"{side}.ln_out")
    decl.append(("head.box.w", "mat_box"))
    decl.append(("head.box.b", "vec_box"))
    decl.append(("head.cls.w", "mat_cls"))
    decl.append(("head.cls.b", "vec_cls"))
    return decl


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Xavier-uniform matrices, zero biases, unit layer-norm gains."""
    rng = SplitMix64(seed)
    d, f = cfg.d_model, cfg.ffn_dim

    def xavier(rows, cols):
        limit = math.sqrt(6.0 / (rows + cols))
        return np.array(
            [[rng.uniform(-limit, limit) for _ in range(cols)] for _ in range(rows)]
        )

    shapes = {
        "mat_in": lambda: xavier(cfg.in_channels, d),
        "mat_dd": lambda: xavier(d, d),
        "mat_df": lambda: xavier(d, f),
        "mat_fd": lambda: xavier(f, d),
        "mat_box": lambda: xavier(d, 4),
        "mat_cls": lambda: xavier(d, cfg.num_classes),
        "queries": lambda: xavier(cfg.num_queries, d),
        "frames": lambda: xavier(2, d),
        "vec_d": lambda: np.zeros(d),
        "vec_f": lambda: np.zeros(f),
        "vec_box": lambda: np.zeros(4),
        "vec_cls": lambda: np.zeros(cfg.num_classes),
        "ones_d": lambda: np.ones(d),
    }
    return {name: shapes[kind]() for name, kind in _layer_prefixes(cfg)}


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(v.size for v in params.values())


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """softmax(q kᵀ / sqrt(d)) v for plain 2-D arrays."""
    q, k, v = (np.asarray(x, dtype=np.float64) for x in (q, k, v))
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("attention expects 2-D arrays")
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ValueError(
            f"shape mismatch: q{q.shape} k{k.shape} v{v.shape}"
        )
    scores = q @ k.T / math.sqrt(q.shape[1])
    if scores.size:
        scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights = weights / weights.sum(axis=-1, keepdims=True)
    return weights @ v


# --- tape-side forward pass -------------------------------------------------


def _wrap(params: dict[str, np.ndarray]) -> dict[str, T.Var]:
    return {name: T.Var(value) for name, value in params.items()}


def _ln_t(x: T.Var, PV, prefix: str) -> T.Var:
    mu = T.vmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = T.vmean(centered * centered, axis=-1, keepdims=True)
    inv = (var + _LN_EPS) ** -0.5
    return centered * inv * PV[f"{prefix}.g"] + PV[f"{prefix}.b"]


def _attn_t(x_q: T.Var, x_kv: T.Var, PV, prefix: str) -> T.Var:
    q = x_q @ PV[f"{prefix}.wq"] + PV[f"{prefix}.bq"]
    k = x_kv @ PV[f"{prefix}.wk"] + PV[f"{prefix}.bk"]
    v = x_kv @ PV[f"{prefix}.wv"] + PV[f"{prefix}.bv"]
    scores = (q @ T.transpose(k)) * (1.0 / math.sqrt(q.shape[1]))
    return (T.softmax_rows(scores) @ v) @ PV[f"{prefix}.wo"] + PV[f"{prefix}.bo"]


def _ffn_t(x: T.Var, PV, prefix: str) -> T.Var:
    return T.relu(x @ PV[f"{prefix}.w1"] + PV[f"{prefix}.b1"]) @ PV[
        f"{prefix}.w2"
    ] + PV[f"{prefix}.b2"]


def embed_frames_t(
    feat_curr: np.ndarray, feat_prev: np.ndarray, PV, cfg: ModelConfig
) -> T.Var:
    hw = cfg.grid_h * cfg.grid_w
    pos = T.Var(sinusoidal_grid_encoding(cfg.grid_h, cfg.grid_w, cfg.d_model))
    tokens = []
    for feat, frame_idx in ((feat_curr, 0), (feat_prev, 1)):
        if feat.shape != (cfg.grid_h, cfg.grid_w, cfg.in_channels):
            raise ValueError(f"feature grid shape {feat.shape} does not match config")
        flat = T.Var(np.asarray(feat, dtype=np.float64).reshape(hw, cfg.in_channels))
        tok = flat @ PV["input_w"] + PV["input_b"]
        tok = tok + pos + T.take_rows(PV["frame_embed"], [frame_idx])
        tokens.append(tok)
    return T.concat_rows(tokens)


def encode_t(feat_curr, feat_prev, PV, cfg: ModelConfig) -> T.Var:
    x = embed_frames_t(feat_curr, feat_prev, PV, cfg)
    for i in range(cfg.enc_layers):
        normed = _ln_t(x, PV, f"enc{i}.ln1")
        x = x + _attn_t(normed, normed, PV, f"enc{i}.attn")
        x = x + _ffn_t(_ln_t(x, PV, f"enc{i}.ln2"), PV, f"enc{i}.ffn")
    if cfg.enc_layers:
        x = _ln_t(x, PV, "enc.ln_out")
    return x


def decode_t(
    queries: T.Var, memory: T.Var, side: str, PV, cfg: ModelConfig
) -> tuple[T.Var, T.Var, T.Var]:
    if side not in ("det", "track"):
        raise ValueError(f"unknown decoder side {side!r}")
    s = "det" if cfg.share_decoder_weights else side
    x = queries
    for i in range(cfg.dec_layers):
        normed = _ln_t(x, PV, f"{s}{i}.ln1")
        x = x + _attn_t(normed, normed, PV, f"{s}{i}.self")
        x = x + _attn_t(_ln_t(x, PV, f"{s}{i}.ln2"), memory, PV, f"{s}{i}.cross")
        x = x + _ffn_t(_ln_t(x, PV, f"{s}{i}.ln3"), PV, f"{s}{i}.ffn")
    if cfg.dec_layers:
        x = _ln_t(x, PV, f"{s}.ln_out")
    boxes = T.sigmoid(x @ PV["head.box.w"] + PV["head.box.b"])
    probs = T.sigmoid(x @ PV["head.cls.w"] + PV["head.cls.b"])
    return boxes, probs, x


# --- plain-array wrappers ----------------------------------------------------


def encode(
    feat_curr: np.ndarray,
    feat_prev: np.ndarray,
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
) -> np.ndarray:
    """Memory tokens (2*H*W, d) for two consecutive feature grids."""
    return encode_t(feat_curr, feat_prev, _wrap(params), cfg).value


def decode(
    queries: np.ndarray,
    memory: np.ndarray,
    side: str,
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(boxes in normalized center form, class probabilities, out features).

    `queries` may be empty (shape (0, d)); all outputs are empty then.
    """
    q = np.asarray(queries, dtype=np.float64).reshape(-1, cfg.d_model)
    boxes, probs, feats = decode_t(T.Var(q), T.Var(memory), side, _wrap(params), cfg)
    return boxes.value, probs.value, feats.value


def embed_frames(feat_curr, feat_prev, params, cfg: ModelConfig) -> np.ndarray:
    """Pre-encoder token embedding of the two frames, (2*H*W, d)."""
    return embed_frames_t(feat_curr, feat_prev, _wrap(params), cfg).value


# --- set loss on the tape ----------------------------------------------------


def _giou_rows_t(pred: T.Var, gt: np.ndarray) -> T.Var:
    """Row-wise GIoU between predicted center-form boxes (k,4) and fixed
    ground-truth center-form boxes."""
    tiny = 1e-12
    pcx, pcy = T.take_cols(pred, [0]), T.take_cols(pred, [1])
    pw, ph = T.take_cols(pred, [2]), T.take_cols(pred, [3])
    px1, px2 = pcx - pw * 0.5, pcx + pw * 0.5
    py1, py2 = pcy - ph * 0.5, pcy + ph * 0.5
    g = np.asarray(gt, dtype=np.float64).reshape(-1, 4)
    gx1 = (g[:, 0] - g[:, 2] / 2).reshape(-1, 1)
    gx2 = (g[:, 0] + g[:, 2] / 2).reshape(-1, 1)
    gy1 = (g[:, 1] - g[:, 3] / 2).reshape(-1, 1)
    gy2 = (g[:, 1] + g[:, 3] / 2).reshape(-1, 1)
    garea = ((g[:, 2] * g[:, 3])).reshape(-1, 1)
    iw = T.relu(T.minimum(px2, gx2) - T.maximum(px1, gx1))
    ih = T.relu(T.minimum(py2, gy2) - T.maximum(py1, gy1))
    inter = iw * ih
    union = pw * ph + garea - inter
    iou = inter / T.maximum(union, tiny)
    ew = T.maximum(px2, gx2) - T.minimum(px1, gx1)
    eh = T.maximum(py2, gy2) - T.minimum(py1, gy1)
    enclose = ew * eh
    return iou - (enclose - union) / T.maximum(enclose, tiny)


def set_loss_t(
    boxes: T.Var,
    probs: T.Var,
    gts: Sequence[GroundTruth],
    w: LossWeights,
    assignment: Assignment,
) -> T.Var:
    """Tape twin of losses.set_loss for a fixed assignment."""
    n, c = probs.shape
    targets = np.zeros((n, c))
    for r, col in assignment.pairs:
        targets[r, gts[col].class_id] = 1.0
    p = T.clip(probs, w.prob_eps, 1.0 - w.prob_eps)
    pos = (1.0 - p) ** w.focal_gamma * T.log(p) * (-w.focal_alpha)
    neg = p**w.focal_gamma * T.log(1.0 - p) * (-(1.0 - w.focal_alpha))
    cls = T.vsum(T.Var(targets) * pos + T.Var(1.0 - targets) * neg)
    total = cls * w.lambda_cls
    if assignment.pairs:
        rows = [r for r, _ in assignment.pairs]
        gt_arr = np.array(
            [
                [gts[col].box.cx, gts[col].box.cy, gts[col].box.w, gts[col].box.h]
                for _, col in assignment.pairs
            ]
        )
        matched = T.take_rows(boxes, rows)
        l1 = T.vsum(T.vabs(matched - T.Var(gt_arr)))
        giou_term = T.vsum(1.0 - _giou_rows_t(matched, gt_arr))
        total = total + l1 * w.lambda_l1 + giou_term * w.lambda_giou
    return total * (1.0 / max(1, len(gts)))


def _predictions(boxes: np.ndarray, probs: np.ndarray) -> list[Prediction]:
    return [
        Prediction(CenterBox(*boxes[i]), probs[i]) for i in range(boxes.shape[0])
    ]


def _gts_of(boxes: Sequence[Box], image_size) -> list[GroundTruth]:
    img_w, img_h = image_size
    return [GroundTruth(b.to_center(img_w, img_h)) for b in boxes]


@dataclass
class PairAssignments:
    """Matchings used by one training pair (frozen during grad checks)."""

    det1: Assignment
    det2: Assignment
    track2: Assignment


def pair_loss_t(
    PV: dict[str, T.Var],
    pair: TrainingPair,
    cfg: ModelConfig,
    w: LossWeights,
    strategy: str = "current",
    fixed: Optional[PairAssignments] = None,
) -> tuple[T.Var, PairAssignments]:
    """Two-pass training loss for one (frame, perturbed frame) pair.

    Pass 1 detects on the static frame (duplicated features) and harvests
    the matched output features as track queries; pass 2 decodes both query
    sets against the (perturbed, static) memory. Detection queries are
    supervised on each frame's objects, track queries on the perturbed
    frame per the chosen matching strategy (current | previous).
    """
    if strategy not in ("current", "previous"):
        raise ValueError(f"unknown matching strategy {strategy!r}")
    gts1 = _gts_of(pair.boxes1, pair.image_size)
    gts2 = _gts_of(pair.boxes2, pair.image_size)

    mem1 = encode_t(pair.feat1, pair.feat1, PV, cfg)
    b1, p1, e1 = decode_t(PV["query_embed"], mem1, "det", PV, cfg)
    a1 = fixed.det1 if fixed else optimal_match(_predictions(b1.value, p1.value), gts1, w)
    loss = set_loss_t(b1, p1, gts1, w, a1)

    track_rows = [r for r, _ in a1.pairs]
    track_src_ids = [pair.ids1[c] for _, c in a1.pairs]

    mem2 = encode_t(pair.feat2, pair.feat1, PV, cfg)
    b2, p2, _ = decode_t(PV["query_embed"], mem2, "det", PV, cfg)
    a2 = fixed.det2 if fixed else optimal_match(_predictions(b2.value, p2.value), gts2, w)
    loss = loss + set_loss_t(b2, p2, gts2, w, a2)

    tq = T.take_rows(e1, track_rows)
    bt, pt, _ = decode_t(tq, mem2, "track", PV, cfg)
    if fixed:
        a3 = fixed.track2
    elif strategy == "current":
        a3 = optimal_match(_predictions(bt.value, pt.value), gts2, w)
    else:
        # previous: inherit the frame-1 object identity of each track query.
        id_to_col = {gid: j for j, gid in enumerate(pair.ids2)}
        pairs = tuple(
            (qi, id_to_col[src])
            for qi, src in enumerate(track_src_ids)
            if src in id_to_col
        )
        used = {c for _, c in pairs}
        a3 = Assignment(
            pairs,
            tuple(q for q in range(len(track_rows)) if q not in {r for r, _ in pairs}),
            tuple(j for j in range(len(gts2)) if j not in used),
        )
    loss = loss + set_loss_t(bt, pt, gts2, w, a3)
    return loss, PairAssignments(a1, a2, a3)


def batch_loss_t(
    PV: dict[str, T.Var],
    pairs: Sequence[TrainingPair],
    cfg: ModelConfig,
    w: LossWeights,
    strategy: str = "current",
    fixed: Optional[Sequence[PairAssignments]] = None,
) -> tuple[T.Var, list[PairAssignments]]:
    total = None
    used: list[PairAssignments] = []
    for i, pair in enumerate(pairs):
        loss, asg = pair_loss_t(
            PV, pair, cfg, w, strategy, fixed[i] if fixed else None
        )
        used.append(asg)
        total = loss if total is None else total + loss
    assert total is not None, "empty batch"
    return total * (1.0 / len(pairs)), used


def batch_loss(
    params: dict[str, np.ndarray],
    pairs: Sequence[TrainingPair],
    cfg: ModelConfig,
    w: LossWeights | None = None,
    strategy: str = "current",
) -> float:
    w = w or LossWeights()
    loss, _ = batch_loss_t(_wrap(params), pairs, cfg, w, strategy)
    return float(loss.value)


# --- gradient check ----------------------------------------------------------


def grad_check(
    params: dict[str, np.ndarray],
    pairs: Sequence[TrainingPair],
    cfg: ModelConfig,
    epsilon: float = 1e-5,
    w: LossWeights | None = None,
    strategy: str = "current",
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every parameter entry is perturbed. The bipartite matchings are computed
    once at the base point and held fixed for the difference evaluations:
    the loss is piecewise smooth in the matching, and the analytic gradient
    is exactly the fixed-matching gradient.

    Relative error per entry is |a - f| / max(1, |a|, |f|).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    w = w or LossWeights()
    PV = _wrap(params)
    loss, assignments = batch_loss_t(PV, pairs, cfg, w, strategy)
    if not np.isfinite(loss.value):
        raise FloatingPointError("non-finite loss")
    T.backward(loss)
    grads = {
        name: (PV[name].grad if PV[name].grad is not None else np.zeros_like(value))
        for name, value in params.items()
    }

    def loss_at(perturbed: dict[str, np.ndarray]) -> float:
        val, _ = batch_loss_t(_wrap(perturbed), pairs, cfg, w, strategy, assignments)
        return float(val.value)

    work = {name: value.copy() for name, value in params.items()}
    max_err = 0.0
    for name, value in work.items():
        flat = value.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + epsilon
            up = loss_at(work)
            flat[i] = saved - epsilon
            down = loss_at(work)
            flat[i] = saved
            fd = (up - down) / (2.0 * epsilon)
            err = abs(gflat[i] - fd) / max(1.0, abs(gflat[i]), abs(fd))
            max_err = max(max_err, err)
    return max_err


def gradients(
    params: dict[str, np.ndarray],
    pairs: Sequence[TrainingPair],
    cfg: ModelConfig,
    w: LossWeights | None = None,
    strategy: str = "current",
) -> tuple[float, dict[str, np.ndarray]]:
    """One forward/backward pass: (loss value, per-parameter gradients)."""
    w = w or LossWeights()
    PV = _wrap(params)
    loss, _ = batch_loss_t(PV, pairs, cfg, w, strategy)
    T.backward(loss)
    return float(loss.value), {
        name: (PV[name].grad if PV[name].grad is not None else np.zeros_like(v))
        for name, v in params.items()
    }


# --- training ----------------------------------------------------------------


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    loss_history: list[float]  # length epochs + 1; entry 0 is untrained


def train_toy(
    pairs: Sequence[TrainingPair],
    cfg: ModelConfig | None = None,
    epochs: int = 200,
    lr: float = 0.05,
    seed: int = 0,
    w: LossWeights | None = None,
    strategy: str = "current",
    optimizer: str = "gd",
    params: dict[str, np.ndarray] | None = None,
) -> TrainResult:
    """Full-batch gradient-descent training of both decoders jointly.

    `optimizer` is plain "gd" (fixed step) or "adam". Deterministic given
    the seed; the loss history records the batch loss before every step
    plus the final loss.
    """
    cfg = cfg or ModelConfig()
    w = w or LossWeights()
    if optimizer not in ("gd", "adam"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    params = params if params is not None else init_params(cfg, seed)
    params = {k: v.copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v2 = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    history: list[float] = []
    for epoch in range(epochs):
        loss, grads = gradients(params, pairs, cfg, w, strategy)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        history.append(loss)
        if optimizer == "gd":
            for name in params:
                params[name] -= lr * grads[name]
        else:
            t = epoch + 1
            for name in params:
                m[name] = beta1 * m[name] + (1 - beta1) * grads[name]
                v2[name] = beta2 * v2[name] + (1 - beta2) * grads[name] ** 2
                m_hat = m[name] / (1 - beta1**t)
                v_hat = v2[name] / (1 - beta2**t)
                params[name] -= lr * m_hat / (np.sqrt(v_hat) + adam_eps)
    history.append(batch_loss(params, pairs, cfg, w, strategy))
    return TrainResult(params=params, loss_history=history)


# --- checkpoints ---------------------------------------------------------------

_MAGIC = b"QTNET\x00"
_VERSION = 1


def save_checkpoint(
    path: str, params: dict[str, np.ndarray], cfg: ModelConfig
) -> None:
    """Versioned binary checkpoint: magic, version, config text, shape
    table, then raw little-endian float64 tensor data. Bit-exact."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        cfg_blob = cfg.to_text().encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", value.ndim))
            for dim in value.shape:
                fh.write(struct.pack("<I", dim))
        for value in params.values():
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], ModelConfig]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a querytrack checkpoint (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        cfg = ModelConfig.from_text(fh.read(cfg_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            shapes.append((name, dims))
        params = {}
        for name, dims in shapes:
            n = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64)
            params[name] = data.reshape(dims)
    return params, cfg


# --- tracker provider ----------------------------------------------------------


class ToyNetProvider:
    """Detector + propagator backed by one trained toy network.

    Both query sets decode against the same per-frame encoder memory (it is
    computed once and cached). Detection features become the tracklet
    payload and serve as the next frame's track queries.
    """

    def __init__(
        self,
        params: dict[str, np.ndarray],
        cfg: ModelConfig,
        image_size: tuple[float, float],
    ):
        self.params = params
        self.cfg = cfg
        self.image_size = image_size
        self._memory_frame: Optional[int] = None
        self._memory: Optional[np.ndarray] = None
        self.encode_calls = 0

    def _memory_for(self, frame: Frame) -> np.ndarray:
        if self._memory_frame != frame.index:
            if frame.features is None:
                raise ValueError("toy network provider needs feature grids")
            prev = frame.prev_features if frame.prev_features is not None else frame.features
            self._memory = encode(frame.features, prev, self.params, self.cfg)
            self._memory_frame = frame.index
            self.encode_calls += 1
        return self._memory

    def detect(self, frame: Frame) -> list[Detection]:
        memory = self._memory_for(frame)
        boxes, probs, feats = decode(
            self.params["query_embed"], memory, "det", self.params, self.cfg
        )
        img_w, img_h = self.image_size
        out = []
        for i in range(boxes.shape[0]):
            box = CenterBox(*boxes[i]).to_corner(img_w, img_h)
            out.append(
                Detection(
                    box=box,
                    score=float(probs[i].max()),
                    class_probs=probs[i],
                    feature=feats[i],
                    slot=i,
                )
            )
        return out

    def propagate(
        self, frame: Frame, tracklets: Sequence[Tracklet]
    ) -> list[Propagation]:
        memory = self._memory_for(frame)
        queries = np.stack([t.payload for t in tracklets])
        boxes, probs, feats = decode(queries, memory, "track", self.params, self.cfg)
        img_w, img_h = self.image_size
        return [
            Propagation(
                t.id,
                CenterBox(*boxes[i]).to_corner(img_w, img_h),
                float(probs[i].max()),
                payload=feats[i],
            )
            for i, t in enumerate(tracklets)
        ]

    def init_payload(self, det: Detection):
        return det.feature

    def update_payload(self, payload, det: Detection):
        return det.feature if det.feature is not None else payload
