"""Minimal SVG line charts for sweep outputs (no plotting dependency)."""

from __future__ import annotations

import math

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 40, 55


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9:
        out.append(round(t, 10))
        t += step
    return out


def line_chart(
    series: dict[str, list[tuple[float, float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    log_x: bool = False,
) -> str:
    """Polyline chart; ``series`` maps legend label to (x, y) points."""
    pts_all = [p for pts in series.values() for p in pts]
    if not pts_all:
        raise ValueError("no data to plot")
    fx = (lambda x: math.log10(x)) if log_x else (lambda x: x)
    xs = [fx(x) for x, _ in pts_all]
    ys = [y for _, y in pts_all]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pad = 0.05 * (y1 - y0)
    y0 -= pad
    y1 += pad

    def sx(x):
        return _ML + (fx(x) - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(y):
        return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">'
        f"{title}</text>",
    ]
    # axes
    out.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        'stroke="black"/>'
    )
    out.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>'
    )
    if log_x:
        lo_exp = math.floor(x0)
        hi_exp = math.ceil(x1)
        xticks = [10 ** e for e in range(int(lo_exp), int(hi_exp) + 1)]
    else:
        xticks = _ticks(x0, x1)
    for tx in xticks:
        if not (x0 - 1e-9 <= fx(tx) <= x1 + 1e-9):
            continue
        px = sx(tx)
        out.append(
            f'<line x1="{px}" y1="{_H - _MB}" x2="{px}" y2="{_H - _MB + 5}" '
            'stroke="black"/>'
        )
        label = f"{tx:g}"
        out.append(
            f'<text x="{px}" y="{_H - _MB + 20}" text-anchor="middle">'
            f"{label}</text>"
        )
    for ty in _ticks(y0, y1):
        py = sy(ty)
        out.append(
            f'<line x1="{_ML - 5}" y1="{py}" x2="{_ML}" y2="{py}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_ML - 9}" y="{py + 4}" text-anchor="end">{ty:g}</text>'
        )
    out.append(
        f'<text x="{(_W + _ML) / 2}" y="{_H - 12}" text-anchor="middle">'
        f"{xlabel}</text>"
    )
    out.append(
        f'<text x="18" y="{(_H - _MB + _MT) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(_H - _MB + _MT) / 2})">{ylabel}</text>'
    )
    for k, (label, pts) in enumerate(sorted(series.items())):
        color = _COLORS[k % len(_COLORS)]
        coords = " ".join(
            f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(pts)
        )
        out.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        for x, y in pts:
            out.append(
                f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" '
                f'fill="{color}"/>'
            )
        ly = _MT + 16 * k
        out.append(
            f'<line x1="{_W - _MR - 130}" y1="{ly}" x2="{_W - _MR - 110}" '
            f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{_W - _MR - 104}" y="{ly + 4}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out)
