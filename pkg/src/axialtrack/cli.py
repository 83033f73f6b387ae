"""Command-line harness.

Subcommands:
  demo   synthetic video -> oracle parameters -> both inference modes,
         quality report, tube and heatmap dumps
  bench  multiply-accumulate accounting of both attention schemes
  attn   trajectory heatmap dump for a chosen reference point
  eval   compare a prediction dump against a ground-truth dump

Every run is a pure function of its arguments and config file: repeated
runs write byte-identical reports and image files. Exit codes: 0 on
success, 1 on a validation problem, 2 on an internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace

import numpy as np

from .config import ModelConfig, format_config, load_config
from .crossclip import offline_inference
from .errors import ConfigError, DimensionError, GenerationError, NumericError, ResourceGuardError
from .heatmaps import axial_fields, dump_attention_heatmaps, trajectory_hit_rate
from .macs import CATEGORIES, MacReport, count_macs
from .metrics import GroundTruthSet, vpq
from .pgm import dump_tube_set, load_tube_set
from .segmenter import Tube, near_online_inference, split_into_clips
from .synthetic import build_oracle_params, demo_video_spec, generate_synthetic
from .tensor import RngSpec


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 instead of argparse's 2
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


_CONFIG_FLAGS = [f.name for f in fields(ModelConfig)]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key = value config file")
    parser.add_argument("--seed", type=int, help="seed for all randomness")
    parser.add_argument("--out", metavar="DIR", default="out", help="output directory")
    parser.add_argument("--l", type=int, help="video length in frames")
    parser.add_argument("--t", "--clip-len", dest="t", type=int, help="clip length")
    parser.add_argument("--h", type=int, help="frame height")
    parser.add_argument("--w", type=int, help="frame width")
    parser.add_argument("--d", type=int, help="channel count")
    parser.add_argument("--n", type=int, help="object queries per clip")
    parser.add_argument("--c", type=int, help="class count")
    parser.add_argument("--n-w", dest="n_w", type=int, help="within-clip blocks")
    parser.add_argument("--n-c", dest="n_c", type=int, help="cross-clip blocks")
    parser.add_argument("--heads", type=int, help="attention heads")
    parser.add_argument("--k-sample", dest="k_sample", type=int, help="sampling points per level")
    parser.add_argument("--atrous-rates", dest="atrous_rates", help="e.g. 1,2,3")
    parser.add_argument("--scale-mode", dest="scale_mode", choices=["rsqrt_d", "one"])


def build_parser() -> _Parser:
    parser = _Parser(prog="axialtrack")
    sub = parser.add_subparsers(dest="command", required=True)

    demo = sub.add_parser("demo", parents=[], help="oracle pipeline on a synthetic video")
    _add_config_flags(demo)
    demo.add_argument("--objects", type=int, default=3, help="synthetic object count")

    bench = sub.add_parser("bench", help="attention MAC accounting")
    _add_config_flags(bench)

    attn = sub.add_parser("attn", help="trajectory heatmap dump")
    _add_config_flags(attn)
    attn.add_argument("--ref-t", type=int, default=0, help="reference frame (video index)")
    attn.add_argument("--ref-h", type=int, help="reference row (default: center)")
    attn.add_argument("--ref-w", type=int, help="reference column (default: center)")

    ev = sub.add_parser("eval", help="compare tube dumps")
    _add_config_flags(ev)
    ev.add_argument("--pred", required=True, metavar="DIR", help="prediction dump")
    ev.add_argument("--gt", required=True, metavar="DIR", help="ground-truth dump")
    return parser


def _resolve_config(args: argparse.Namespace) -> ModelConfig:
    cfg = ModelConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    overrides = {}
    for key in _CONFIG_FLAGS:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key == "atrous_rates" and isinstance(value, str):
            try:
                value = tuple(int(v) for v in value.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad atrous rates {value!r}") from exc
        overrides[key] = value
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _flatten(data: dict, prefix: str = "") -> list[tuple[str, object]]:
    items: list[tuple[str, object]] = []
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            items.extend(_flatten(value, f"{name}."))
        else:
            items.append((name, value))
    return items


def write_report(out_dir: str, data: dict) -> None:
    """Emit report.txt (flat key = value lines) and its JSON twin."""
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"{key} = {_fmt(value)}" for key, value in _flatten(data)]
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_dict(cfg: ModelConfig) -> dict:
    out = {}
    for f in fields(ModelConfig):
        value = getattr(cfg, f.name)
        if f.name == "atrous_rates":
            value = ",".join(str(v) for v in value)
        out[f.name] = value
    return out


def _cmd_demo(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    spec = demo_video_spec(cfg, args.objects)
    video, gt = generate_synthetic(spec)
    params = build_oracle_params(spec, cfg)

    near = near_online_inference(video, params)
    off = offline_inference(video, params)
    shuffled = near_online_inference(video, params, shuffle_rng=RngSpec(cfg.seed + 1).stream())

    vpq_near = vpq(near, gt)
    vpq_off = vpq(off, gt)
    vpq_shuf = vpq(shuffled, gt)

    moving = [v != (0, 0) for v in spec.velocities]
    block = params.within_blocks[0] if params.within_blocks else None
    if block is not None:
        hit_rate = trajectory_hit_rate(
            video, [t.masks for t in gt.tubes], moving, cfg.t, block.attn_h, block.attn_w
        )
        clips = split_into_clips(video, cfg.t)
        fields_hw = axial_fields(clips[0], block.attn_h, block.attn_w)
        ref = _first_moving_reference(gt, moving)
        dump_attention_heatmaps(*fields_hw, ref, os.path.join(args.out, "heatmaps"))
    else:
        hit_rate = float("nan")

    dump_tube_set(gt.tubes, gt.class_ids, os.path.join(args.out, "gt"))
    dump_tube_set(near, [int(np.argmax(t.class_probs)) for t in near], os.path.join(args.out, "pred_near"))
    dump_tube_set(off, [int(np.argmax(t.class_probs)) for t in off], os.path.join(args.out, "pred_offline"))

    write_report(args.out, {
        "config": _config_dict(cfg),
        "objects": spec.n_objects,
        "vpq_near_online": vpq_near,
        "vpq_offline": vpq_off,
        "vpq_near_online_shuffled": vpq_shuf,
        "traj_argmax_hit_rate": hit_rate,
    })
    with open(os.path.join(args.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))
    return 0


def _first_moving_reference(gt: GroundTruthSet, moving: list[bool]) -> tuple[int, int, int]:
    for tube, is_moving in zip(gt.tubes, moving):
        if not is_moving:
            continue
        ys, xs = np.nonzero(tube.masks[0])
        mid = len(ys) // 2
        return (0, int(ys[mid]), int(xs[mid]))
    ys, xs = np.nonzero(gt.tubes[0].masks[0])
    return (0, int(ys[0]), int(xs[0]))


def _mac_dict(report: MacReport) -> dict:
    data: dict = {}
    for scheme, measured, analytic in (
        ("full", report.full_measured, report.full_analytic),
        ("axial", report.axial_measured, report.axial_analytic),
    ):
        for key in CATEGORIES:
            data[f"{scheme}_{key}_measured"] = measured[key]
            data[f"{scheme}_{key}_analytic"] = analytic[key]
    data["dominant_macs_full"] = report.dominant_full
    data["dominant_macs_axial"] = report.dominant_axial
    data["ratio"] = report.ratio_measured
    data["ratio_analytic"] = report.ratio_analytic
    data["exact_match"] = report.exact_match
    return data


DEFAULT_SWEEP = tuple(
    (t, hw, d) for t in (2, 4) for hw in (2, 4, 8) for d in (4, 8)
)


def _cmd_bench(args: argparse.Namespace) -> int:
    single = any(getattr(args, key) is not None for key in ("t", "h", "w", "d"))
    cfg = _resolve_config(args)
    if single:
        report = count_macs(cfg)
        write_report(args.out, _mac_dict(report))
        return 0
    sweep: dict = {}
    for t, hw, d in DEFAULT_SWEEP:
        point = replace(cfg, t=t, h=hw, w=hw, d=d)
        sweep[f"t{t}_h{hw}_w{hw}_d{d}"] = _mac_dict(count_macs(point))
    write_report(args.out, sweep)
    return 0


def _cmd_attn(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    spec = demo_video_spec(cfg)
    video, _ = generate_synthetic(spec)
    params = build_oracle_params(spec, cfg)
    clips = split_into_clips(video, cfg.t)
    ref_t = args.ref_t
    if not 0 <= ref_t < video.shape[0]:
        raise IndexError(f"reference frame {ref_t} outside video of length {video.shape[0]}")
    clip_idx, t_local = divmod(ref_t, cfg.t)
    ref_h = args.ref_h if args.ref_h is not None else cfg.h // 2
    ref_w = args.ref_w if args.ref_w is not None else cfg.w // 2
    block = params.within_blocks[0]
    field_h, field_w = axial_fields(clips[clip_idx], block.attn_h, block.attn_w)
    paths = dump_attention_heatmaps(
        field_h, field_w, (t_local, ref_h, ref_w), os.path.join(args.out, "heatmaps")
    )
    write_report(args.out, {
        "config": _config_dict(cfg),
        "clip_index": clip_idx,
        "reference": f"({ref_t},{ref_h},{ref_w})",
        "frames_written": len(paths),
    })
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    pred_masks, pred_cls, pred_tids = load_tube_set(args.pred)
    gt_masks, gt_cls, gt_tids = load_tube_set(args.gt)
    if not gt_masks:
        raise ConfigError(f"no tubes found under {args.gt}")
    n_classes = max(pred_cls + gt_cls) + 1
    preds = []
    for masks, cid, tid in zip(pred_masks, pred_cls, pred_tids):
        probs = np.zeros(n_classes)
        probs[cid] = 1.0
        preds.append(Tube(masks, probs, track_id=tid))
    gt_tubes = []
    for masks, cid, tid in zip(gt_masks, gt_cls, gt_tids):
        probs = np.zeros(n_classes)
        probs[cid] = 1.0
        gt_tubes.append(Tube(np.round(masks), probs, track_id=tid))
    score = vpq(preds, GroundTruthSet(gt_tubes, list(gt_cls)))
    write_report(args.out, {"vpq": score, "predictions": len(preds), "ground_truth": len(gt_tubes)})
    return 0


_COMMANDS = {"demo": _cmd_demo, "bench": _cmd_bench, "attn": _cmd_attn, "eval": _cmd_eval}


def cli_main(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DimensionError, NumericError, GenerationError,
            ResourceGuardError, IndexError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is an internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
