"""Command-line front end.

Every subcommand reads the run configuration from ``--config`` (or the
``SETPRED3D_CONFIG`` environment variable) and accepts ``--set key=value``
overrides on top of it. Output is deterministic for fixed inputs and seeds.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ENV_VAR, ConfigError, RunConfig, dump_config, load_config
from .geom3d import Box3D, DomainError, bev_iou_rotated_batch
from .kitti import (KittiFormatError, format_pointcloud_bin, inject_noise, label_to_box, load_dataset,
                    make_recenter_detector, parse_calib_file, parse_label_file, parse_pointcloud_bin,
                    passthrough, robustness_table, run_robustness, write_dataset, DetectionFrame)
from .kitti.suite import eval_suite
from .kitti.synthetic import make_frames
from .loss_engine import StageOutput, frame_loss_detail
from .set_matcher import GroundTruth, Prediction
from .voxel_grid import assign_points, grid_dims


class CliError(Exception):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None


def _load_points(path: str) -> np.ndarray:
    try:
        return parse_pointcloud_bin(_read_bytes(path))
    except KittiFormatError as exc:
        raise CliError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# voxelize

def cmd_voxelize(args, cfg: RunConfig) -> int:
    pts = _load_points(args.input)
    vmap = assign_points(pts, cfg.grid, cfg.max_points, cfg.seed)
    report = {
        "input": str(args.input),
        "grid_dims": list(grid_dims(cfg.grid)),
        "voxel_size": list(cfg.voxel_size),
        "range": list(cfg.extent.as_tuple()),
        "max_points": cfg.max_points,
        "seed": cfg.seed,
        "points_in": vmap.n_input,
        "points_out_of_range": vmap.n_out_of_range,
        "points_capped": vmap.n_capped,
        "points_retained": vmap.n_retained,
        "nonempty_voxels": len(vmap),
    }
    _emit(_dumps(report), args.output)
    return 0


# ---------------------------------------------------------------------------
# match

def parse_prediction_file(text: str, num_classes: int, source: str = "<predictions>") -> list[Prediction]:
    """One prediction per line: ``cx cy cz w l h yaw p_0 ... p_{C-1}``."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) != 7 + num_classes:
            raise CliError(f"{source}:{lineno}: expected {7 + num_classes} fields "
                           f"(7 box values + {num_classes} class probabilities), found {len(parts)}")
        try:
            vals = [float(v) for v in parts]
            out.append(Prediction(Box3D(*vals[:7]), tuple(vals[7:])))
        except ValueError as exc:
            raise CliError(f"{source}:{lineno}: {exc}") from None
    return out


def parse_box_label_file(text: str, categories: tuple[str, ...], source: str = "<labels>") -> list[GroundTruth]:
    """One ground truth per line: ``category cx cy cz w l h yaw`` (LiDAR frame).

    ``category`` is a name from the configured categories or its index.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) != 8:
            raise CliError(f"{source}:{lineno}: expected 8 fields (category + 7 box values), found {len(parts)}")
        cat = parts[0]
        if cat in categories:
            label = categories.index(cat)
        elif cat.isdigit() and int(cat) < len(categories):
            label = int(cat)
        else:
            raise CliError(f"{source}:{lineno}: unknown category {cat!r}; configured: {list(categories)}")
        try:
            out.append(GroundTruth(Box3D(*(float(v) for v in parts[1:])), label))
        except ValueError as exc:
            raise CliError(f"{source}:{lineno}: {exc}") from None
    return out


def match_report(preds: list[Prediction], gts: list[GroundTruth], cfg: RunConfig) -> dict:
    try:
        detail = frame_loss_detail(StageOutput(preds), gts, cfg.weights, extent=cfg.extent)
    except DomainError as exc:
        raise CliError(str(exc)) from None
    pairs = []
    for (gi, pj), loss in zip(detail.match.pairs, detail.pair_losses):
        pairs.append({"gt": gi, "pred": pj, "cost": float(detail.match.costs[gi, pj]), **loss.as_dict()})
    return {
        "num_predictions": len(preds),
        "num_gts": len(gts),
        "weights": {"cls": cfg.weights.cls, "l1": cfg.weights.l1, "iou": cfg.weights.iou},
        "pairs": pairs,
        "unmatched": [{"pred": j, **b.as_dict()} for j, b in zip(detail.match.unmatched, detail.background)],
        "matching_cost": detail.match.cost,
        "normalizer": detail.normalizer,
        "raw": detail.raw.as_dict(),
        "frame_loss": detail.normalized.as_dict(),
    }


def cmd_match(args, cfg: RunConfig) -> int:
    preds = parse_prediction_file(_read_text(args.predictions), len(cfg.categories), args.predictions)
    gts = parse_box_label_file(_read_text(args.labels), cfg.categories, args.labels)
    _emit(_dumps(match_report(preds, gts, cfg)), args.output)
    return 0


# ---------------------------------------------------------------------------
# eval

def _detector(name: str, cfg: RunConfig, have_points: bool):
    if name == "auto":
        name = "recenter" if have_points else "passthrough"
    if name == "recenter":
        return make_recenter_detector(cfg.noise_margin)
    return passthrough


def cmd_eval(args, cfg: RunConfig) -> int:
    try:
        frames = load_dataset(args.gts, args.dets, args.velodyne, args.calib)
    except (KittiFormatError, FileNotFoundError) as exc:
        raise CliError(str(exc)) from None
    have_points = all(fr.points is not None for fr in frames)
    report = eval_suite(frames, cfg.eval_categories, cfg.thresholds)
    runs = run_robustness(frames, cfg.noise_levels, cfg.seed, _detector(args.detector, cfg, have_points),
                          cfg.noise_margin, cfg.eval_categories, cfg.thresholds)
    jsonl = report.to_jsonl()
    for run in runs:
        jsonl += run.report.to_jsonl()
        jsonl += json.dumps({"noise": run.noise, "points_before": run.points_before,
                             "points_after": run.points_after, "conserved": run.conserved},
                            sort_keys=True) + "\n"
    table = report.to_table()
    for cat in cfg.eval_categories:
        table += "\n" + robustness_table(runs, cat, min(cfg.thresholds))
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.jsonl").write_text(jsonl)
        (out / "report.txt").write_text(table)
    sys.stdout.write(table)
    return 0 if all(r.conserved for r in runs) else 1


# ---------------------------------------------------------------------------
# iou-bench, noise, synth

def cmd_iou_bench(args, cfg: RunConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    n = args.pairs

    def boxes():
        return np.column_stack([rng.normal(0, 1.5, n), rng.normal(0, 1.5, n), rng.uniform(0.5, 3, n),
                                rng.uniform(1, 5, n), rng.uniform(-np.pi, np.pi, n)])

    a, b = boxes(), boxes()
    best = float("inf")
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        iou = bev_iou_rotated_batch(a, b)
        best = min(best, time.perf_counter() - t0)
    rate = n / best
    result = {"pairs": n, "repeat": args.repeat, "best_seconds": best, "pairs_per_second": rate,
              "target_pairs_per_second": 1e5, "meets_target": rate >= 1e5,
              "mean_iou": float(iou.mean())}
    sys.stdout.write(_dumps(result))
    return 0


def cmd_noise(args, cfg: RunConfig) -> int:
    pts = _load_points(args.input)
    try:
        labels = parse_label_file(_read_text(args.labels))
        calib = parse_calib_file(_read_text(args.calib)) if args.calib else None
    except KittiFormatError as exc:
        raise CliError(f"{args.labels}: {exc}") from None
    frame_id = args.frame_id or Path(args.labels).stem
    frame = DetectionFrame(frame_id, [(lab, label_to_box(lab, calib)) for lab in labels
                                      if lab.category != "DontCare"], [], pts)
    noisy = inject_noise(frame, args.k, cfg.seed, cfg.noise_margin)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    Path(args.output).write_bytes(format_pointcloud_bin(noisy.points))
    sys.stdout.write(_dumps({"frame_id": frame_id, "k": args.k, "objects": len(frame.gts),
                             "points_before": len(pts), "points_after": len(noisy.points),
                             "seed": cfg.seed, "margin": cfg.noise_margin}))
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    frames = make_frames(args.frames, cfg.seed, extent=cfg.extent)
    dirs = write_dataset(frames, args.output)
    sys.stdout.write(_dumps({k: str(v) for k, v in dirs.items()} | {"frames": len(frames)}))
    return 0


def cmd_config(args, cfg: RunConfig) -> int:
    sys.stdout.write(dump_config(cfg))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"key-value config file (default: ${ENV_VAR})")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--seed", type=int, help="shortcut for --set seed=N")

    parser = argparse.ArgumentParser(prog="setpred3d", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", parents=[common], help="voxel statistics for a point-cloud binary")
    p.add_argument("input", help="KITTI velodyne .bin file")
    p.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("match", parents=[common], help="match predictions to labels and report losses")
    p.add_argument("--predictions", required=True, help="lines: cx cy cz w l h yaw p_0 .. p_C-1")
    p.add_argument("--labels", required=True, help="lines: category cx cy cz w l h yaw")
    p.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", parents=[common], help="AP tables plus noise-robustness rows")
    p.add_argument("--dets", required=True, help="directory of <frame>.txt detection files (16 fields)")
    p.add_argument("--gts", required=True, help="directory of <frame>.txt label files (15 fields)")
    p.add_argument("--velodyne", help="directory of <frame>.bin point clouds")
    p.add_argument("--calib", help="directory of <frame>.txt calibration files")
    p.add_argument("--detector", choices=("auto", "passthrough", "recenter"), default="auto",
                   help="how detections are re-derived after noise injection (default: recenter "
                        "when point clouds are given, else passthrough)")
    p.add_argument("--output-dir", help="also write report.jsonl and report.txt here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("iou-bench", parents=[common], help="rotated BEV IoU throughput")
    p.add_argument("--pairs", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    p.set_defaults(func=cmd_iou_bench)

    p = sub.add_parser("noise", parents=[common], help="inject noise points around labeled objects")
    p.add_argument("--input", required=True, help="velodyne .bin file")
    p.add_argument("--labels", required=True, help="KITTI label file for the same frame")
    p.add_argument("--calib", help="calibration file; omit for LiDAR-frame labels")
    p.add_argument("--k", type=int, required=True, help="points per object")
    p.add_argument("--frame-id", help="frame id used to derive the seed stream (default: label file stem)")
    p.add_argument("-o", "--output", required=True, help="output .bin file")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic KITTI-style dataset")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("-o", "--output", required=True, help="output root directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("config", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_config)
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    if args.seed is not None:
        out["seed"] = str(args.seed)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config or os.environ.get(ENV_VAR) or None, _overrides(args))
        return args.func(args, cfg)
    except (CliError, ConfigError, KittiFormatError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
