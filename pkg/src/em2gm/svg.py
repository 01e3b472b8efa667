"""Minimal SVG line charts, no plotting dependency.

Just enough to eyeball a trajectory or a rate fit: polylines on a framed
viewport, optional log axes, min/max tick labels, and a small legend. The
output is deterministic, so chart files can be byte-compared across runs.
"""

from __future__ import annotations

import math

__all__ = ["write_line_chart"]

_COLORS = ("#1f6fb4", "#c23b22", "#2e8b57", "#8a2be2", "#b8860b", "#444444")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 30, 44


def _transform(v: float, log: bool) -> float | None:
    if not math.isfinite(v):
        return None
    if log:
        if v <= 0.0:
            return None
        return math.log10(v)
    return v


def write_line_chart(path, x, series: dict, title: str = "", xlabel: str = "",
                     ylabel: str = "", logx: bool = False, logy: bool = False,
                     width: int = 640, height: int = 420) -> None:
    """Write one chart: shared x against one or more named y series.

    Points that do not fit the axes (non-finite, or nonpositive on a log
    axis) are dropped from their polyline rather than failing the chart.
    """
    xs = [float(v) for v in x]
    clean: dict[str, list[tuple[float, float]]] = {}
    for name, ys in series.items():
        pts = []
        for xv, yv in zip(xs, ys):
            tx, ty = _transform(xv, logx), _transform(float(yv), logy)
            if tx is not None and ty is not None:
                pts.append((tx, ty))
        clean[name] = pts

    allx = [p[0] for pts in clean.values() for p in pts]
    ally = [p[1] for pts in clean.values() for p in pts]
    if not allx:
        allx, ally = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x0 == x1:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y0 == y1:
        y0, y1 = y0 - 0.5, y1 + 0.5

    px0, px1 = _MARGIN_L, width - _MARGIN_R
    py0, py1 = height - _MARGIN_B, _MARGIN_T

    def sx(v):
        return px0 + (v - x0) / (x1 - x0) * (px1 - px0)

    def sy(v):
        return py0 + (v - y0) / (y1 - y0) * (py1 - py0)

    def tick(v, log):
        return f"{10.0 ** v:.3g}" if log else f"{v:.3g}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{px0}" y="{py1}" width="{px1 - px0}" height="{py0 - py1}" '
        'fill="none" stroke="#999" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13">{title}</text>')
    parts.append(f'<text x="{(px0 + px1) / 2:.1f}" y="{height - 8}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11">{xlabel}</text>')
    parts.append(f'<text x="14" y="{(py0 + py1) / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11" '
                 f'transform="rotate(-90 14 {(py0 + py1) / 2:.1f})">{ylabel}</text>')
    parts.append(f'<text x="{px0}" y="{py0 + 16}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="10">{tick(x0, logx)}</text>')
    parts.append(f'<text x="{px1}" y="{py0 + 16}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="10">{tick(x1, logx)}</text>')
    parts.append(f'<text x="{px0 - 6}" y="{py0 + 3:.1f}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="10">{tick(y0, logy)}</text>')
    parts.append(f'<text x="{px0 - 6}" y="{py1 + 3:.1f}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="10">{tick(y1, logy)}</text>')

    for i, (name, pts) in enumerate(clean.items()):
        color = _COLORS[i % len(_COLORS)]
        if pts:
            coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in pts)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                         'stroke-width="1.5"/>')
        ly = _MARGIN_T + 14 * i + 4
        parts.append(f'<line x1="{px1 - 88}" y1="{ly}" x2="{px1 - 70}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{px1 - 64}" y="{ly + 4}" font-family="sans-serif" '
                     f'font-size="10">{name}</text>')

    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
