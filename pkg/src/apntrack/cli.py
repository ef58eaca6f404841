"""Command-line entry point: train, track, eval, and labels-check.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .config import format_config, from_dict, load_config, validate
from .errors import ConfigError
from .evaluate import SequenceRecord, evaluate, write_report
from .geometry import CornerBox, GridGeometry
from .labels import apn_regression_labels, centerness, quality_mask
from .network import TrackNet
from .seqio import (list_frames, load_frame, read_attributes, read_boxes,
                    read_times, write_boxes, write_times)
from .tracker import Tracker
from .train import Trainer


def build_parser():
    parser = argparse.ArgumentParser(
        prog="apntrack",
        description="Two-stage anchor-proposal tracker: training, online "
                    "tracking, and one-pass evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model on synthetic scenes")
    p_train.add_argument("--config", help="JSON config file (comments allowed)")
    p_train.add_argument("--out", help="output directory for checkpoint and loss history")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--preset", choices=["toy", "paper"], default="toy")
    p_train.add_argument("--print-config", action="store_true",
                         help="print the resolved config and exit")
    p_train.add_argument("--max-steps", type=int, default=None)

    p_track = sub.add_parser("track", help="run the tracker over a frame directory")
    p_track.add_argument("--checkpoint", required=True)
    p_track.add_argument("--sequence", required=True, help="directory of frames")
    p_track.add_argument("--init", required=True, help="first-frame box as 'x,y,w,h'")
    p_track.add_argument("--out", required=True, help="results file (x,y,w,h per frame)")
    p_track.add_argument("--seed", type=int, default=None)

    p_eval = sub.add_parser("eval", help="score results against annotations")
    p_eval.add_argument("--results", required=True, help="directory of <seq>.txt results")
    p_eval.add_argument("--annotations", required=True,
                        help="directory of <seq>.txt ground truth plus <seq>.json tags")
    p_eval.add_argument("--out", required=True, help="report output directory")

    p_labels = sub.add_parser("labels-check",
                              help="dump per-grid-point label maps for inspection")
    p_labels.add_argument("--patch", default="96,96", help="search patch size 'w,h'")
    p_labels.add_argument("--stride", type=int, default=4)
    p_labels.add_argument("--map", default="12,12", help="feature map size 'w,h'")
    p_labels.add_argument("--box", required=True,
                          help="ground-truth corners 'x1,y1,x2,y2' in patch pixels")
    p_labels.add_argument("--area-ratio", type=float, default=2.0)
    p_labels.add_argument("--out", help="output CSV path (default: stdout)")
    return parser


def _parse_pair(text, what):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{what} must be 'a,b', got {text!r}")
    return int(parts[0]), int(parts[1])


def cmd_train(args):
    cfg = load_config(args.config, preset=args.preset, seed=args.seed)
    if args.print_config:
        sys.stdout.write(format_config(cfg))
        return 0
    if args.out is None:
        raise ConfigError("train requires --out (or --print-config)")
    network = TrackNet(cfg.model, seed=cfg.seed)
    trainer = Trainer(network, cfg, out_dir=args.out)
    total_steps = cfg.schedule.total_epochs * cfg.schedule.steps_per_epoch
    log_every = max(1, total_steps // 20)

    def progress(step, loss, lr):
        if step % log_every == 0:
            print(f"step {step:6d}  loss {loss:.4f}  lr {lr:.6f}", flush=True)

    result = trainer.run(max_steps=args.max_steps, progress=progress)
    print(f"trained {result.steps_run} steps: loss {result.initial_loss:.4f} "
          f"-> {result.final_loss:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_track(args):
    params, cfg_dict = load_checkpoint(args.checkpoint)
    cfg = from_dict(cfg_dict) if cfg_dict else from_dict({})
    validate(cfg)
    network = TrackNet(cfg.model, seed=cfg.seed)
    network.load_state_dict(params)

    parts = args.init.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--init must be 'x,y,w,h', got {args.init!r}")
    x, y, w, h = (float(p) for p in parts)
    if w <= 0 or h <= 0:
        raise ConfigError(f"--init box must have positive size, got {args.init!r}")
    init_box = CornerBox(x, y, x + w, y + h)

    paths = list_frames(args.sequence)
    frames = [lambda p=p: load_frame(p) for p in paths]
    tracker = Tracker(network, cfg.tracker, cfg.labels)
    result = tracker.run_sequence(frames, init_box)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_boxes(out, result.boxes)
    write_times(out.with_name(out.stem + "_time.txt"), result.frame_seconds)
    print(f"tracked {len(result.boxes)} frames at {result.fps:.2f} FPS")
    print(f"results: {out}")
    return 0


def cmd_eval(args):
    ann_dir = Path(args.annotations)
    res_dir = Path(args.results)
    records = []
    results = {}
    fps = {}
    ann_files = sorted(p for p in ann_dir.glob("*.txt")
                       if not p.stem.endswith("_time"))
    if not ann_files:
        raise ConfigError(f"no annotation files in {ann_dir}")
    for ann in ann_files:
        name = ann.stem
        records.append(SequenceRecord(
            name=name,
            gt_boxes=read_boxes(ann),
            attributes=read_attributes(ann_dir / f"{name}.json"),
        ))
        res_file = res_dir / f"{name}.txt"
        if not res_file.exists():
            raise ConfigError(f"missing results file {res_file}")
        boxes = read_boxes(res_file)
        if any(b is None for b in boxes):
            raise ConfigError(f"{res_file}: results must not contain NaN boxes")
        results[name] = boxes
        times = read_times(res_dir / f"{name}_time.txt")
        if times and sum(times) > 0:
            fps[name] = len(times) / sum(times)

    cfg = from_dict({})
    report = evaluate(results, records, cfg.eval, fps=fps)
    paths = write_report(report, args.out)
    ov = report.overall
    fps_text = f"{ov.fps:.2f}" if ov.fps is not None else "n/a"
    print(f"sequences: {len(report.per_sequence)}  AUC: {ov.auc:.4f}  "
          f"precision@20: {ov.precision_at_rank:.4f}  FPS: {fps_text}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def labels_check_dump(geom, box, area_ratio):
    """Row-major per-point table of the geometric label maps."""
    targets = apn_regression_labels(geom, box)
    quality = quality_mask(geom, box, area_ratio)
    inside = ((targets[0] > 0) & (targets[1] > 0)
              & (targets[2] > 0) & (targets[3] > 0)).astype(np.int64)
    center = centerness(geom, box)
    lines = ["i,j,px,py,apn0,apn1,apn2,apn3,quality,inside,centerness"]
    for j in range(geom.h):
        for i in range(geom.w):
            px, py = geom.point_x(i), geom.point_y(j)
            t = targets[:, j, i]
            lines.append(
                f"{i},{j},{px:.4f},{py:.4f},{t[0]:.4f},{t[1]:.4f},{t[2]:.4f},"
                f"{t[3]:.4f},{quality[j, i]:.0f},{inside[j, i]},{center[j, i]:.6f}"
            )
    return "\n".join(lines) + "\n"


def cmd_labels_check(args):
    pw, ph = _parse_pair(args.patch, "--patch")
    mw, mh = _parse_pair(args.map, "--map")
    parts = args.box.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--box must be 'x1,y1,x2,y2', got {args.box!r}")
    x1, y1, x2, y2 = (float(p) for p in parts)
    if x2 <= x1 or y2 <= y1:
        raise ConfigError(f"--box is degenerate: {args.box!r}")
    if args.area_ratio <= 1.0:
        raise ConfigError("--area-ratio must exceed 1")
    geom = GridGeometry(w_s=pw, h_s=ph, s=args.stride, w=mw, h=mh)
    dump = labels_check_dump(geom, CornerBox(x1, y1, x2, y2), args.area_ratio)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(dump, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(dump)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "track": cmd_track,
    "eval": cmd_eval,
    "labels-check": cmd_labels_check,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse --version/--help or usage errors
        return exc.code if exc.code is not None else 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
