"""Minimal SVG line chart for plotdata rows."""

from __future__ import annotations

import math
from html import escape
from typing import Iterable, Sequence

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def render_svg(rows: Iterable[Sequence], title: str = "", width: int = 640,
               height: int = 400) -> str:
    """Render ``(x, series, mean, ci)`` rows as an SVG line chart with CI whiskers.

    The x axis is logarithmic when all x are positive and span more than two
    decades.
    """
    series: dict[str, list[tuple[float, float, float]]] = {}
    for x, name, mean, ci in rows:
        x, mean, ci = float(x), float(mean), float(ci)
        if math.isnan(mean):
            continue
        series.setdefault(str(name), []).append((x, mean, 0.0 if math.isnan(ci) else ci))
    left, right, top, bottom = 60, 160, 30, 40
    pw, ph = width - left - right, height - top - bottom
    xs = [p[0] for pts in series.values() for p in pts] or [0.0, 1.0]
    ys = [v for pts in series.values() for _, m, c in pts for v in (m - c, m + c)] or [0.0, 1.0]
    log_x = min(xs) > 0 and max(xs) / min(xs) > 100
    tx = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    x0, x1 = tx(min(xs)), tx(max(xs))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = min(ys), max(ys)
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v: float) -> float:
        return left + (tx(v) - x0) / (x1 - x0) * pw

    def sy(v: float) -> float:
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{_fmt(yv)}</text>')
    for xv in sorted(set(xs)):
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{_fmt(xv)}</text>')
    for idx, (name, pts) in enumerate(sorted(series.items())):
        color = _COLORS[idx % len(_COLORS)]
        pts = sorted(pts)
        line = " ".join(f"{sx(x):.1f},{sy(m):.1f}" for x, m, _ in pts)
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, m, c in pts:
            out.append(f'<line x1="{sx(x):.1f}" x2="{sx(x):.1f}" y1="{sy(m - c):.1f}" '
                       f'y2="{sy(m + c):.1f}" stroke="{color}"/>')
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(m):.1f}" r="2.5" fill="{color}"/>')
        ly = top + 14 * idx + 8
        out.append(f'<line x1="{left + pw + 10}" x2="{left + pw + 28}" y1="{ly}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
