"""Minimal hand-written SVG line plots for run and comparison artifacts.

Only what the figures need: axes with tick labels, polylines, an optional
shaded x-band and a legend. Numbers are written with fixed precision so
reruns produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .scenario import RoadGeometry

__all__ = ["Series", "line_plot", "paths_plot", "write_svg"]

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    color: str | None = None
    dashed: bool = False
    width: float = 1.5
    extra: dict = field(default_factory=dict)


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:g}"


class _Canvas:
    def __init__(self, xlim, ylim, width=720, height=360, margin=(60, 20, 30, 45)):
        self.w, self.h = width, height
        self.ml, self.mr, self.mt, self.mb = margin
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.parts: list[str] = []

    def px(self, x):
        return self.ml + (x - self.x0) / (self.x1 - self.x0) * (self.w - self.ml - self.mr)

    def py(self, y):
        return self.h - self.mb - (y - self.y0) / (self.y1 - self.y0) * (self.h - self.mt - self.mb)

    def polyline(self, xs, ys, color, width=1.5, dashed=False):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys)
                       if math.isfinite(x) and math.isfinite(y))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
                          f'{dash} points="{pts}"/>')

    def band(self, xa, xb, color="#ffe0b0"):
        a, b = self.px(max(xa, self.x0)), self.px(min(xb, self.x1))
        if b > a:
            self.parts.append(f'<rect x="{_fmt(a)}" y="{self.mt}" width="{_fmt(b - a)}" '
                              f'height="{self.h - self.mt - self.mb}" fill="{color}" opacity="0.5"/>')

    def axes(self, title, xlabel, ylabel):
        left, right = self.ml, self.w - self.mr
        top, bottom = self.mt, self.h - self.mb
        p = self.parts
        p.append(f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
                 f'fill="none" stroke="#000" stroke-width="1"/>')
        for t in _nice_ticks(self.x0, self.x1):
            x = _fmt(self.px(t))
            p.append(f'<line x1="{x}" y1="{bottom}" x2="{x}" y2="{bottom + 4}" stroke="#000"/>')
            p.append(f'<text x="{x}" y="{bottom + 16}" font-size="11" text-anchor="middle">'
                     f'{_label(t)}</text>')
        for t in _nice_ticks(self.y0, self.y1):
            y = _fmt(self.py(t))
            p.append(f'<line x1="{left - 4}" y1="{y}" x2="{left}" y2="{y}" stroke="#000"/>')
            p.append(f'<text x="{left - 6}" y="{y}" font-size="11" text-anchor="end" '
                     f'dominant-baseline="middle">{_label(t)}</text>')
        p.append(f'<text x="{(left + right) / 2:.1f}" y="{self.h - 8}" font-size="12" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
        p.append(f'<text x="14" y="{(top + bottom) / 2:.1f}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 14 {(top + bottom) / 2:.1f})">{escape(ylabel)}</text>')
        p.append(f'<text x="{(left + right) / 2:.1f}" y="{top - 6 if top > 18 else 14}" '
                 f'font-size="13" text-anchor="middle">{escape(title)}</text>')

    def legend(self, entries):
        x = self.w - self.mr - 170
        y = self.mt + 14
        for label, color, dashed in entries:
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 24}" y2="{y}" stroke="{color}" '
                              f'stroke-width="2"{dash}/>')
            self.parts.append(f'<text x="{x + 30}" y="{y}" font-size="11" '
                              f'dominant-baseline="middle">{escape(label)}</text>')
            y += 15

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        body = [head, f'<rect width="{self.w}" height="{self.h}" fill="#fff"/>', *self.parts, "</svg>"]
        return "\n".join(body) + "\n"


def _limits(values, pad=0.05):
    arr = np.concatenate([np.asarray(v, float).ravel() for v in values]) if values else np.zeros(1)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return -1.0, 1.0
    lo, hi = float(arr.min()), float(arr.max())
    if hi - lo < 1e-9:
        span = max(abs(lo), 1.0) * 0.1
        return lo - span, hi + span
    d = (hi - lo) * pad
    return lo - d, hi + d


def _colored(series):
    return [(s, s.color or PALETTE[i % len(PALETTE)]) for i, s in enumerate(series)]


def line_plot(series, title: str, xlabel: str, ylabel: str, width=720, height=320) -> str:
    """Render ``series`` (list of :class:`Series`) as one SVG document."""
    series = list(series)
    canvas = _Canvas(_limits([s.x for s in series], 0.0), _limits([s.y for s in series]),
                     width, height)
    canvas.axes(title, xlabel, ylabel)
    for s, color in _colored(series):
        canvas.polyline(s.x, s.y, color, s.width, s.dashed)
    canvas.legend([(s.label, c, s.dashed) for s, c in _colored(series)])
    return canvas.render()


def paths_plot(series, road: RoadGeometry, title: str = "Vehicle paths",
               x_range: tuple | None = None, width=900, height=300) -> str:
    """Vehicle paths drawn over the road outline, with the merge zone shaded."""
    series = list(series)
    if x_range is None:
        x_range = _limits([s.x for s in series], 0.0)
    canvas = _Canvas(x_range, (road.y_bottom - 0.5, road.y_upper + 0.5), width, height)
    canvas.band(road.x_merge_start, road.x_merge_end)
    xa, xb = x_range
    edge_x = [xa, road.x_merge_start, road.x_merge_end, xb]
    edge_x = sorted(min(max(v, xa), xb) for v in edge_x)

    def lower(x):
        if x < road.x_merge_start:
            return road.y_bottom
        if x <= road.x_merge_end:
            return road.k_sl * x + road.b
        return road.y_lane

    canvas.polyline(edge_x, [lower(x) for x in edge_x], "#000", 2.0)
    canvas.polyline([xa, xb], [road.y_upper, road.y_upper], "#000", 2.0)
    div_end = min(max(road.x_merge_start, xa), xb)
    canvas.polyline([xa, div_end], [road.y_lane, road.y_lane], "#777", 1.0, dashed=True)
    canvas.axes(title, "x [m]", "y [m]")
    for s, color in _colored(series):
        canvas.polyline(s.x, s.y, color, s.width, s.dashed)
    canvas.legend([(s.label, c, s.dashed) for s, c in _colored(series)])
    return canvas.render()


def write_svg(path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
