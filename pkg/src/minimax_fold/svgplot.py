"""Minimal static SVG line charts (data plots only, no interactivity)."""

from __future__ import annotations

import math

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H, _PAD = 640, 420, 56


def _transform(values, log):
    out = []
    for v in values:
        if log:
            out.append(math.log10(v) if v > 0 else float("nan"))
        else:
            out.append(float(v))
    return out


def svg_line_chart(path, series, title="", x_label="", y_label="",
                   logx=False, logy=False) -> None:
    """Write a polyline chart; ``series`` is a list of (name, xs, ys)."""
    pts = []
    for _, xs, ys in series:
        pts.extend((x, y) for x, y in zip(_transform(xs, logx), _transform(ys, logy))
                   if math.isfinite(x) and math.isfinite(y))
    if not pts:
        raise ValueError("nothing to plot")
    x_lo = min(p[0] for p in pts)
    x_hi = max(p[0] for p in pts)
    y_lo = min(p[1] for p in pts)
    y_hi = max(p[1] for p in pts)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def to_px(x, y):
        px = _PAD + (x - x_lo) / x_span * (_W - 2 * _PAD)
        py = _H - _PAD - (y - y_lo) / y_span * (_H - 2 * _PAD)
        return px, py

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle" font-size="12">'
        f'{x_label}{" (log10)" if logx else ""}</text>',
        f'<text x="16" y="{_H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_H / 2})">{y_label}{" (log10)" if logy else ""}</text>',
    ]
    for idx, (name, xs, ys) in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        coords = [to_px(x, y) for x, y in zip(_transform(xs, logx), _transform(ys, logy))
                  if math.isfinite(x) and math.isfinite(y)]
        if not coords:
            continue
        path_d = " ".join(f"{px:.2f},{py:.2f}" for px, py in coords)
        lines.append(f'<polyline points="{path_d}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        for px, py in coords:
            lines.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" fill="{color}"/>')
        lines.append(f'<text x="{_W - _PAD + 4}" y="{_PAD + 16 * idx}" font-size="11" '
                     f'fill="{color}">{name}</text>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
