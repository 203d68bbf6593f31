"""CSV, JSONL and SVG writers.  Formatting is fixed so reruns are byte-identical."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .trial import Comparison, SweepPoint

MSE_HEADER = ["axis_value", "algorithm", "delta", "mse_position", "mse_orientation", "trials", "ambiguity_rate"]


def _num(x: float) -> str:
    if isinstance(x, str):
        return x
    if math.isnan(x):
        return "nan"
    return repr(float(x))


def write_mse_csv(path: str | Path, points: Iterable[SweepPoint]) -> None:
    rows = sorted(points, key=lambda p: (p.algorithm, p.delta, p.axis, p.value))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MSE_HEADER)
        for p in rows:
            s = p.stats
            w.writerow([_num(p.value), p.algorithm, p.delta, _num(s.mse_position), _num(s.mse_orientation),
                        s.trials, _num(s.ambiguity_rate)])


def write_comparison_csv(path: str | Path, rows: Iterable[Comparison]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis_value", "mse_position_a", "mse_position_b", "ratio_position",
                    "mse_orientation_a", "mse_orientation_b", "ratio_orientation"])
        for r in rows:
            w.writerow([_num(r.axis_value), _num(r.mse_a[0]), _num(r.mse_b[0]), _num(r.ratio_position),
                        _num(r.mse_a[1]), _num(r.mse_b[1]), _num(r.ratio_orientation)])


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def line_plot_svg(series: dict[str, Sequence[tuple[float, float]]], title: str = "",
                  xlabel: str = "", ylabel: str = "", width: int = 480, height: int = 320) -> str:
    """A small standalone SVG line chart; one polyline per series."""
    colors = ["#1f4fd1", "#c8201e", "#2a9d3a", "#8e44ad"]
    pts = [(x, y) for s in series.values() for x, y in s if math.isfinite(y)]
    left, right, top, bottom = 60, 20, 30, 45
    pw, ph = width - left - right, height - top - bottom
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = 0.0, max(p[1] for p in pts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
           f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
           f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="11" '
           f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>']
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 15}" text-anchor="middle" font-size="10">{xv:.3g}</text>')
        out.append(f'<text x="{left - 5}" y="{sy(yv) + 3:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    for i, (name, s) in enumerate(series.items()):
        c = colors[i % len(colors)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{coords}"/>')
        for x, y in s:
            if math.isfinite(y):
                out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{c}"/>')
        out.append(f'<text x="{left + pw - 5}" y="{top + 14 * (i + 1)}" text-anchor="end" font-size="11" '
                   f'fill="{c}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_sweep_plots(directory: str | Path, points: Sequence[SweepPoint]) -> list[Path]:
    """One SVG per (algorithm, delta, axis): position and orientation MSE against sigma."""
    directory = Path(directory)
    groups: dict[tuple, list[SweepPoint]] = {}
    for p in points:
        groups.setdefault((p.algorithm, p.delta, p.axis), []).append(p)
    paths = []
    for (alg, delta, axis), pts in sorted(groups.items()):
        pts = sorted(pts, key=lambda p: p.value)
        series = {
            "position (m^2)": [(p.value, p.stats.mse_position) for p in pts],
            "orientation (rad^2)": [(p.value, p.stats.mse_orientation) for p in pts],
        }
        tag = f"{alg}_d{delta}" if alg == "alg1" else alg
        path = directory / f"plot_{tag}_{axis}.svg"
        path.write_text(line_plot_svg(series, f"{tag}: MSE vs {axis}", axis, "MSE"))
        paths.append(path)
    return paths
