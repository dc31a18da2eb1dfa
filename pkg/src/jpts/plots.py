"""Deterministic SVG line charts for training logs and evaluation reports.

Each chart is written next to a CSV copy of its data. The <svg> element
carries data-x-min/-max and data-y-min/-max attributes giving the plotted
axis ranges, which extend the data range by a 5% margin on each side.
"""

from __future__ import annotations

import math
from pathlib import Path

from .evaluation import EvalReport
from .trainer import TrainLog

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50
MARGIN = 0.05
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def axis_range(values):
    lo, hi = min(values), max(values)
    span = hi - lo
    if span == 0:
        span = abs(lo) if lo else 1.0
    return lo - MARGIN * span, hi + MARGIN * span


def _num(x):
    return f"{x:.3f}"


def _label(x):
    return f"{x:.4g}"


def render_svg(series, title, xlabel, ylabel):
    """``series`` is a list of (name, [(x, y), ...]); returns SVG text."""
    xs = [p[0] for _, pts in series for p in pts]
    ys = [p[1] for _, pts in series for p in pts]
    if not xs:
        raise ValueError("nothing to plot")
    x0, x1 = axis_range(xs)
    y0, y1 = axis_range(ys)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-x-min="{x0!r}" data-x-max="{x1!r}" '
        f'data-y-min="{y0!r}" data-y-max="{y1!r}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{_num(sx(fx))}" y="{TOP + ph + 16}" text-anchor="middle" '
                   f'font-size="10">{_label(fx)}</text>')
        out.append(f'<text x="{LEFT - 6}" y="{_num(sy(fy) + 3)}" text-anchor="end" '
                   f'font-size="10">{_label(fy)}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="14" y="{TOP + ph / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {TOP + ph / 2})">{ylabel}</text>')
    for k, (name, pts) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in pts)
        if len(pts) > 1:
            out.append(f'<polyline class="series" data-name="{name}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        for x, y in pts:
            out.append(f'<circle class="point" data-name="{name}" data-x="{x!r}" data-y="{y!r}" '
                       f'cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{LEFT + 8}" y="{TOP + 14 + 14 * k}" font-size="11" '
                   f'fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def log_series(log):
    epochs = log.column("epoch")
    return [("train_loss", list(zip(epochs, log.column("train_loss")))),
            ("val_loss", list(zip(epochs, log.column("val_loss"))))]


def report_series(report):
    """NMSE against alpha, one series per strategy; exact rows are skipped."""
    series = {}
    for r in sorted(report.rows, key=lambda r: (r.alpha, r.seed)):
        if math.isfinite(r.nmse_db):
            series.setdefault(r.strategy, []).append((float(r.alpha), float(r.nmse_db)))
    return list(series.items())


def emit_plots(data, path):
    """Write ``path`` (SVG) and the same stem with .csv; returns both paths."""
    path = Path(path)
    if len(data) == 0:
        raise ValueError("cannot plot an empty log or report")
    if isinstance(data, TrainLog):
        svg = render_svg(log_series(data), "training loss", "epoch", "loss")
    elif isinstance(data, EvalReport):
        svg = render_svg(report_series(data), "NMSE by alpha", "alpha", "NMSE (dB)")
    else:
        raise TypeError(f"cannot plot {type(data).__name__}")
    csv_path = path.with_suffix(".csv")
    with open(path, "w", newline="\n") as fh:
        fh.write(svg)
    if csv_path != path:
        data.write(csv_path)
    return path, csv_path


def load_table(text):
    """Parse a CSV written by a TrainLog or an EvalReport."""
    header = text.split("\n", 1)[0].strip()
    if header.startswith("epoch,"):
        return TrainLog.from_csv(text)
    return EvalReport.from_csv(text)
