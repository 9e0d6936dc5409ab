"""Command-line entry point wiring the pipeline into reproducible workflows.

Subcommands: simulate (scenario -> gt/det/feature files), track (detections
-> MOT result file), eval (gt + result -> metric reports), train (toy
network -> checkpoint), gradcheck (finite-difference verification), and
ablate (motion-model / association comparison table).

Options resolve as: built-in default < config file (key=value lines, path
from --config or $QUERYTRACK_CONFIG) < command-line flag. Exit codes:
0 success, 1 runtime/I/O error, 2 usage or config error, 3 failed
acceptance check (gradcheck tolerance, ablate assertions).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as mot_io
from . import metrics, synth, toynet
from .motion import FrozenBoxPropagator, KalmanPropagator
from .tracker import TrackerConfig, run_sequence

CONFIG_ENV_VAR = "QUERYTRACK_CONFIG"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_CHECK_FAILED = 3


class ConfigError(ValueError):
    pass


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def _resolve_options(args: argparse.Namespace, option_types: dict[str, type]) -> None:
    """Fill unset (None) flags from the config file; flags win. Unknown
    config keys are rejected."""
    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return
    config = _load_config_file(path)
    unknown = set(config) - set(option_types)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, value in config.items():
        if getattr(args, key, None) is None:
            typ = option_types[key]
            try:
                setattr(args, key, typ(value) if typ is not bool else value == "true")
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc


def _tracker_config(args: argparse.Namespace) -> TrackerConfig:
    try:
        return TrackerConfig(
            rebirth_k=args.rebirth_k if args.rebirth_k is not None else 32,
            min_iou=args.min_iou if args.min_iou is not None else 0.3,
            association=args.association or "hungarian",
            score_thresh=args.score_thresh if args.score_thresh is not None else 0.5,
            query_mode=args.query_mode or "both",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


_TRACK_OPTIONS = {
    "rebirth_k": int,
    "min_iou": float,
    "score_thresh": float,
    "association": str,
    "query_mode": str,
    "provider": str,
    "seed": int,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    _resolve_options(args, {"write_features": bool})
    spec = synth.spec_from_text(Path(args.spec).read_text())
    gt, det, feats = synth.generate(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "gt.txt").write_text(mot_io.write_gt(gt))
    (out_dir / "det.txt").write_text(mot_io.write_detections(det))
    if args.write_features:
        np.save(out_dir / "features.npy", np.stack(feats))
    print(f"wrote {out_dir / 'gt.txt'} and {out_dir / 'det.txt'}")
    return EXIT_OK


def _build_providers(args, det_frames, features, image_size):
    provider = args.provider or "none"
    if provider in ("none", "replay"):
        return mot_io.replay_provider(det_frames), FrozenBoxPropagator(), features
    if provider == "kalman":
        return mot_io.replay_provider(det_frames), KalmanPropagator(), features
    if provider == "toynet":
        if not args.checkpoint:
            raise ConfigError("provider toynet requires --checkpoint")
        params, model_cfg = toynet.load_checkpoint(args.checkpoint)
        if features is None:
            raise ConfigError("provider toynet requires --scenario input (features)")
        net = toynet.ToyNetProvider(params, model_cfg, image_size)
        return net, net, features
    raise ConfigError(f"unknown provider {provider!r}")


def cmd_track(args: argparse.Namespace) -> int:
    _resolve_options(args, _TRACK_OPTIONS)
    cfg = _tracker_config(args)
    if bool(args.det) == bool(args.scenario):
        raise ConfigError("exactly one of --det or --scenario is required")
    if args.det:
        with open(args.det) as fh:
            det_frames = mot_io.parse_mot(fh, kind="det")
        features: Optional[list] = None
        image_size = (float(args.image_w), float(args.image_h))
        length = len(det_frames)
    else:
        spec = synth.spec_from_text(Path(args.scenario).read_text())
        _, det_frames, feats = synth.generate(spec)
        features = feats
        image_size = (float(spec.image_w), float(spec.image_h))
        length = spec.length
    if length == 0:
        Path(args.out).write_text("")
        return EXIT_OK
    detector, propagator, features = _build_providers(
        args, det_frames, features, image_size
    )
    frame_features = features if features is not None else [None] * length
    outputs = run_sequence(frame_features, detector, propagator, cfg)
    Path(args.out).write_text(
        mot_io.write_results(mot_io.annotations_from_outputs(outputs))
    )
    print(f"wrote {args.out}")
    return EXIT_OK


def _pad_to(frames: list, length: int) -> list:
    out = list(frames)
    for frame in range(len(out) + 1, length + 1):
        out.append(mot_io.FrameAnnotations(frame, []))
    return out


def cmd_eval(args: argparse.Namespace) -> int:
    _resolve_options(args, {"iou_thresh": float, "min_visibility": float})
    iou_thresh = args.iou_thresh if args.iou_thresh is not None else 0.5
    min_vis = args.min_visibility if args.min_visibility is not None else 0.0
    with open(args.gt) as fh:
        gt = mot_io.parse_mot(fh, kind="gt", min_visibility=min_vis)
    with open(args.result) as fh:
        pred = mot_io.parse_mot(fh, kind="result")
    length = max(len(gt), len(pred))
    report = metrics.evaluate(_pad_to(gt, length), _pad_to(pred, length), iou_thresh)
    table = metrics.format_report(report)
    print(table, end="")
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.txt").write_text(table)
    Path(f"{prefix}.kv").write_text(metrics.report_keyvalues(report))
    return EXIT_OK


_TRAIN_OPTIONS = {
    "pairs": int,
    "epochs": int,
    "lr": float,
    "seed": int,
    "optimizer": str,
    "strategy": str,
    "max_objects": int,
}


def cmd_train(args: argparse.Namespace) -> int:
    _resolve_options(args, _TRAIN_OPTIONS)
    model_cfg = toynet.ModelConfig()
    pairs = synth.make_training_pairs(
        args.pairs if args.pairs is not None else 12,
        seed=args.seed if args.seed is not None else 0,
        max_objects=args.max_objects if args.max_objects is not None else 2,
        size_range=(100.0, 180.0),
        scale_range=(0.94, 1.06),
        translate_range=(18.0, 18.0),
    )
    result = toynet.train_toy(
        pairs,
        model_cfg,
        epochs=args.epochs if args.epochs is not None else 300,
        lr=args.lr if args.lr is not None else 2e-3,
        seed=args.seed if args.seed is not None else 0,
        strategy=args.strategy or "current",
        optimizer=args.optimizer or "adam",
    )
    toynet.save_checkpoint(args.out, result.params, model_cfg)
    history = result.loss_history
    print(
        f"trained {len(history) - 1} epochs: loss {history[0]:.4f} -> "
        f"{history[-1]:.4f}; checkpoint {args.out}"
    )
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    _resolve_options(args, {"epsilon": float, "tolerance": float, "seed": int})
    epsilon = args.epsilon if args.epsilon is not None else 1e-5
    tolerance = args.tolerance if args.tolerance is not None else 1e-3
    seed = args.seed if args.seed is not None else 0
    cfg = toynet.GRADCHECK_CONFIG
    params = toynet.init_params(cfg, seed=seed)
    pairs = synth.make_training_pairs(
        1, seed=seed + 1, feature_grid=cfg.grid_h, max_objects=2,
        image_size=(128, 128), size_range=(30.0, 60.0),
    )
    err = toynet.grad_check(params, pairs, cfg, epsilon=epsilon)
    status = "PASS" if err <= tolerance else "FAIL"
    print(
        f"gradcheck {status}: max relative error {err:.3e} "
        f"(tolerance {tolerance:.1e}, {toynet.param_count(params)} parameters)"
    )
    return EXIT_OK if err <= tolerance else EXIT_CHECK_FAILED


# --- ablations -----------------------------------------------------------------


def motion_trend_specs(num: int, base_seed: int = 1000) -> list[synth.ScenarioSpec]:
    """Linear-motion scenarios in the regime where frozen-box association
    is brittle at frame stride 4 but easy at stride 1."""
    return [
        synth.ScenarioSpec(
            image_w=512,
            image_h=512,
            length=49,
            num_objects=3,
            speed_min=4.0,
            speed_max=5.0,
            size_min=40.0,
            size_max=55.0,
            center_std=2.0,
            size_std=1.0,
            seed=base_seed + i,
        )
        for i in range(num)
    ]


def separated_specs(num: int, base_seed: int = 2000) -> list[synth.ScenarioSpec]:
    """Slow, well-separated scenarios (pairwise GT IoU < 0.3 by lane
    construction) for the Hungarian-vs-NMS equivalence check."""
    return [
        synth.ScenarioSpec(
            image_w=512,
            image_h=512,
            length=20,
            num_objects=3,
            speed_min=0.5,
            speed_max=2.0,
            size_min=40.0,
            size_max=70.0,
            center_std=1.0,
            size_std=0.5,
            seed=base_seed + i,
        )
        for i in range(num)
    ]


@dataclass
class AblationRow:
    provider: str
    stride: int
    mota: float
    fp: int
    fn: int
    idsw: int


def _track_scenario(det_frames, propagator, cfg, length):
    return run_sequence([None] * length, mot_io.replay_provider(det_frames),
                        propagator, cfg)


def run_motion_ablation(
    specs: Sequence[synth.ScenarioSpec], strides: Sequence[int] = (1, 4)
) -> list[AblationRow]:
    providers = {
        "none": FrozenBoxPropagator,
        "kalman": KalmanPropagator,
    }
    rows = []
    for stride in strides:
        for name, factory in providers.items():
            fp = fn = idsw = gt_total = 0
            mota_weighted = 0.0
            for spec in specs:
                gt, det, _ = synth.generate(spec)
                gt_s = synth.skip_sample(gt, stride)
                det_s = synth.skip_sample(det, stride)
                outs = _track_scenario(
                    det_s, factory(), TrackerConfig(score_thresh=0.3), len(det_s)
                )
                report = metrics.evaluate(
                    gt_s, mot_io.annotations_from_outputs(outs)
                )
                fp += report.fp
                fn += report.fn
                idsw += report.idsw
                gt_total += report.gt_count
            mota = 100.0 * (1.0 - (fp + fn + idsw) / max(1, gt_total))
            rows.append(AblationRow(name, stride, mota, fp, fn, idsw))
    return rows


def run_association_comparison(
    specs: Sequence[synth.ScenarioSpec],
) -> list[tuple[int, bool]]:
    """(seed, identical result files) for Hungarian vs NMS association."""
    out = []
    for spec in specs:
        _, det, _ = synth.generate(spec)
        results = {}
        for assoc in ("hungarian", "nms"):
            cfg = TrackerConfig(association=assoc, score_thresh=0.3)
            outs = _track_scenario(det, FrozenBoxPropagator(), cfg, len(det))
            results[assoc] = mot_io.write_results(
                mot_io.annotations_from_outputs(outs)
            )
        out.append((spec.seed, results["hungarian"] == results["nms"]))
    return out


def format_ablation_table(rows: Sequence[AblationRow]) -> str:
    header = f"{'provider':<10} {'stride':>6} {'MOTA':>8} {'FP':>6} {'FN':>6} {'IDSW':>6}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.provider:<10} {r.stride:>6} {r.mota:>8.2f} {r.fp:>6} {r.fn:>6} {r.idsw:>6}"
        )
    return "\n".join(lines) + "\n"


def cmd_ablate(args: argparse.Namespace) -> int:
    _resolve_options(args, {"scenarios": int, "seed": int})
    num = args.scenarios if args.scenarios is not None else 10
    base_seed = args.seed if args.seed is not None else 1000
    rows = run_motion_ablation(motion_trend_specs(num, base_seed))
    table = format_ablation_table(rows)
    comparisons = run_association_comparison(separated_specs(max(2, num // 2)))
    table += "\nassociation (hungarian vs nms): " + (
        "identical result files on all scenarios"
        if all(same for _, same in comparisons)
        else "MISMATCH on seeds "
        + ", ".join(str(seed) for seed, same in comparisons if not same)
    ) + "\n"
    print(table, end="")
    if args.out:
        Path(args.out).write_text(table)
    by_key = {(r.provider, r.stride): r for r in rows}
    trend_ok = by_key[("none", 4)].idsw >= by_key[("kalman", 4)].idsw
    s1_none = by_key[("none", 1)].idsw
    s1_kalman = by_key[("kalman", 1)].idsw
    stride1_ok = abs(s1_none - s1_kalman) <= 0.1 * max(s1_none, s1_kalman, 1)
    nms_ok = all(same for _, same in comparisons)
    if not (trend_ok and stride1_ok and nms_ok):
        print(
            f"ablation checks failed: stride4_trend={trend_ok} "
            f"stride1_close={stride1_ok} nms_equivalence={nms_ok}",
            file=sys.stderr,
        )
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="querytrack",
        description="Joint detection-and-tracking pipeline with two query sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic scenario")
    p_sim.add_argument("--spec", required=True, help="scenario spec file")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--write-features", action="store_true", default=None)
    p_sim.add_argument("--config")
    p_sim.set_defaults(func=cmd_simulate)

    p_track = sub.add_parser("track", help="run the tracker, write MOT results")
    p_track.add_argument("--det", help="MOT det file to replay")
    p_track.add_argument("--scenario", help="scenario spec file to simulate")
    p_track.add_argument("--out", required=True)
    p_track.add_argument(
        "--provider", choices=["none", "replay", "kalman", "toynet"]
    )
    p_track.add_argument("--checkpoint", help="toy-network checkpoint")
    p_track.add_argument("--rebirth-k", dest="rebirth_k", type=int)
    p_track.add_argument("--min-iou", dest="min_iou", type=float)
    p_track.add_argument("--score-thresh", dest="score_thresh", type=float)
    p_track.add_argument("--association", choices=["hungarian", "nms"])
    p_track.add_argument(
        "--query-mode",
        dest="query_mode",
        choices=["both", "detection_only_index", "track_only"],
    )
    p_track.add_argument("--image-w", dest="image_w", type=float, default=512)
    p_track.add_argument("--image-h", dest="image_h", type=float, default=512)
    p_track.add_argument("--seed", type=int)
    p_track.add_argument("--config")
    p_track.set_defaults(func=cmd_track)

    p_eval = sub.add_parser("eval", help="CLEAR-MOT + IDF1 evaluation")
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--result", required=True)
    p_eval.add_argument("--out-prefix", dest="out_prefix", required=True)
    p_eval.add_argument("--iou-thresh", dest="iou_thresh", type=float)
    p_eval.add_argument("--min-visibility", dest="min_visibility", type=float)
    p_eval.add_argument("--config")
    p_eval.set_defaults(func=cmd_eval)

    p_train = sub.add_parser("train", help="train the toy network")
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.add_argument("--pairs", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--optimizer", choices=["gd", "adam"])
    p_train.add_argument("--strategy", choices=["current", "previous"])
    p_train.add_argument("--max-objects", dest="max_objects", type=int)
    p_train.add_argument("--config")
    p_train.set_defaults(func=cmd_train)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p_grad.add_argument("--epsilon", type=float)
    p_grad.add_argument("--tolerance", type=float)
    p_grad.add_argument("--seed", type=int)
    p_grad.add_argument("--config")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_abl = sub.add_parser(
        "ablate", help="motion-model and association ablation table"
    )
    p_abl.add_argument("--out")
    p_abl.add_argument("--scenarios", type=int)
    p_abl.add_argument("--seed", type=int)
    p_abl.add_argument("--config")
    p_abl.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
