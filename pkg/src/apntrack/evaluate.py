"""One-pass-evaluation metrics: precision and success curves, AUC, and
attribute-sliced reports with CSV and SVG emission.

Conventions: success at threshold t counts frames with IoU strictly
above t; precision at t counts frames with center error strictly below
t. The AUC field is the exact area under the success step curve over
[0, 1], which equals the mean IoU; the sampled trapezoid stays within
one grid cell of it. Sequences are aggregated per sequence, not per
frame. Frames without ground truth (full occlusion) are excluded.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import cle, iou

KNOWN_ATTRIBUTES = ("fast-motion", "low-resolution", "partial-occlusion",
                    "full-occlusion", "none")


@dataclass
class SequenceRecord:
    name: str
    gt_boxes: list                 # CornerBox or None per frame
    attributes: list = field(default_factory=list)
    frames: list = None            # optional frame paths; not used for scoring


@dataclass
class SequenceMetrics:
    name: str
    n_scored: int
    success: np.ndarray
    precision: np.ndarray
    auc: float
    precision_at_rank: float
    fps: float = None


@dataclass
class EvalReport:
    iou_thresholds: np.ndarray
    cle_thresholds: np.ndarray
    per_sequence: list
    overall: SequenceMetrics
    attributes: dict               # tag -> aggregate SequenceMetrics
    attribute_members: dict        # tag -> list of sequence names


def iou_threshold_grid(step=0.02):
    return np.round(np.arange(0.0, 1.0 + 0.5 * step, step), 10)


def cle_threshold_grid(max_value=50.0, step=1.0):
    return np.round(np.arange(0.0, max_value + 0.5 * step, step), 10)


def success_curve(ious, thresholds=None):
    """Fraction of frames with IoU strictly above each threshold."""
    if len(ious) == 0:
        raise ValueError("success_curve needs at least one frame")
    thresholds = iou_threshold_grid() if thresholds is None else thresholds
    ious = np.asarray(ious, dtype=np.float64)
    return (ious[None, :] > thresholds[:, None]).mean(axis=1)


def precision_curve(cles, thresholds=None):
    """Fraction of frames with center error strictly below each threshold."""
    if len(cles) == 0:
        raise ValueError("precision_curve needs at least one frame")
    thresholds = cle_threshold_grid() if thresholds is None else thresholds
    cles = np.asarray(cles, dtype=np.float64)
    return (cles[None, :] < thresholds[:, None]).mean(axis=1)


def auc_exact(ious):
    """Exact area under the success step curve on [0, 1]: the mean IoU."""
    if len(ious) == 0:
        raise ValueError("auc needs at least one frame")
    return float(np.clip(np.asarray(ious, dtype=np.float64), 0.0, 1.0).mean())


def precision_at(cles, threshold=20.0):
    if len(cles) == 0:
        raise ValueError("precision needs at least one frame")
    return float((np.asarray(cles, dtype=np.float64) < threshold).mean())


def _score_sequence(name, pred_boxes, gt_boxes, cfg, fps):
    if len(pred_boxes) != len(gt_boxes):
        raise ValueError(
            f"sequence '{name}': {len(pred_boxes)} results for {len(gt_boxes)} "
            "annotated frames"
        )
    ious, cles = [], []
    for pred, gt in zip(pred_boxes, gt_boxes):
        if gt is None:
            continue
        ious.append(iou(pred, gt))
        cles.append(cle(pred, gt))
    if not ious:
        raise ValueError(f"sequence '{name}' has no annotated frames")
    iou_grid = iou_threshold_grid(cfg.iou_step)
    cle_grid = cle_threshold_grid(cfg.cle_max, cfg.cle_step)
    return SequenceMetrics(
        name=name,
        n_scored=len(ious),
        success=success_curve(ious, iou_grid),
        precision=precision_curve(cles, cle_grid),
        auc=auc_exact(ious),
        precision_at_rank=precision_at(cles, cfg.rank_cle),
        fps=fps,
    )


def _aggregate(name, metrics, cfg):
    fps_values = [m.fps for m in metrics if m.fps is not None]
    return SequenceMetrics(
        name=name,
        n_scored=int(sum(m.n_scored for m in metrics)),
        success=np.mean([m.success for m in metrics], axis=0),
        precision=np.mean([m.precision for m in metrics], axis=0),
        auc=float(np.mean([m.auc for m in metrics])),
        precision_at_rank=float(np.mean([m.precision_at_rank for m in metrics])),
        fps=float(np.mean(fps_values)) if fps_values else None,
    )


def evaluate(results, records, cfg, fps=None):
    """Score tracker output against annotations.

    results maps sequence name to a list of CornerBox (one per frame);
    records holds the annotations; fps optionally maps name to a
    frames-per-second figure. Aggregates are per-sequence means; a
    sequence tagged with k attributes appears in k attribute slices.
    """
    fps = fps or {}
    per_sequence = []
    for record in records:
        if record.name not in results:
            raise ValueError(f"no results for sequence '{record.name}'")
        per_sequence.append(_score_sequence(
            record.name, results[record.name], record.gt_boxes, cfg,
            fps.get(record.name)))

    attribute_slices = {}
    for record, metrics in zip(records, per_sequence):
        for tag in record.attributes:
            attribute_slices.setdefault(tag, []).append(metrics)

    return EvalReport(
        iou_thresholds=iou_threshold_grid(cfg.iou_step),
        cle_thresholds=cle_threshold_grid(cfg.cle_max, cfg.cle_step),
        per_sequence=per_sequence,
        overall=_aggregate("overall", per_sequence, cfg),
        attributes={tag: _aggregate(tag, rows, cfg)
                    for tag, rows in sorted(attribute_slices.items())},
        attribute_members={tag: [m.name for m in rows]
                           for tag, rows in sorted(attribute_slices.items())},
    )


# -- report emission ----------------------------------------------------


def _csv_rows(metrics_list, overall):
    lines = ["sequence,frames,auc,precision_at_20,fps"]
    for m in list(metrics_list) + [overall]:
        fps = f"{m.fps:.6f}" if m.fps is not None else ""
        lines.append(f"{m.name},{m.n_scored},{m.auc:.6f},{m.precision_at_rank:.6f},{fps}")
    return "\n".join(lines) + "\n"


def write_report(report, out_dir):
    """Emit overall.csv, one attr_<tag>.csv per attribute, and SVG plots."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    overall_csv = out_dir / "overall.csv"
    overall_csv.write_text(_csv_rows(report.per_sequence, report.overall),
                           encoding="utf-8")
    paths.append(overall_csv)

    for tag, agg in report.attributes.items():
        names = set(report.attribute_members[tag])
        members = [m for m in report.per_sequence if m.name in names]
        path = out_dir / f"attr_{tag}.csv"
        path.write_text(_csv_rows(members, agg), encoding="utf-8")
        paths.append(path)

    success_svg = out_dir / "success.svg"
    success_svg.write_text(plot_svg(
        report.iou_thresholds, {"overall": report.overall.success},
        title="Success plot", xlabel="IoU threshold", ylabel="success rate"),
        encoding="utf-8")
    paths.append(success_svg)

    precision_svg = out_dir / "precision.svg"
    precision_svg.write_text(plot_svg(
        report.cle_thresholds, {"overall": report.overall.precision},
        title="Precision plot", xlabel="CLE threshold (px)", ylabel="precision"),
        encoding="utf-8")
    paths.append(precision_svg)
    return paths


def plot_svg(xs, curves, title="", xlabel="", ylabel=""):
    """Minimal deterministic SVG line plot (byte-stable for equal inputs)."""
    width, height = 480, 360
    ml, mr, mt, mb = 56, 16, 36, 48
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = float(xs[0]), float(xs[-1])
    span = (x1 - x0) or 1.0

    def sx(x):
        return ml + (x - x0) / span * pw

    def sy(y):
        return mt + (1.0 - y) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    # axes
    parts.append(f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" '
                 'stroke="black" stroke-width="1"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x0 + frac * span
        parts.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{xv:g}</text>')
        parts.append(f'<text x="{ml - 6}" y="{sy(frac) + 3:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{frac:g}</text>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{ylabel}</text>')

    colors = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]
    for idx, (name, ys) in enumerate(curves.items()):
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
                       for x, y in zip(xs, ys))
        color = colors[idx % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.5"/>')
        parts.append(f'<text x="{ml + pw - 4}" y="{mt + 14 + 14 * idx}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
