"""Deterministic SVG rendering of apertures and level curves."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .dynamics import ApertureResult, LevelCurve

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
           "#7f7f7f")


def _fmt(v: float) -> str:
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def emit_plot(data, style: dict | None = None) -> str:
    """Render survivors (scatter) and level curves (closed paths) as one SVG document.

    ``data`` is an :class:`ApertureResult`, a :class:`LevelCurve` or an
    iterable of them.  ``style`` may set ``size`` (pixels), ``extent``
    (half-width of the plotted square), ``title`` and ``point_radius``.
    """
    style = dict(style or {})
    items = [data] if isinstance(data, (ApertureResult, LevelCurve)) else list(data)
    if not items:
        raise ValueError("nothing to plot")
    apertures = [d for d in items if isinstance(d, ApertureResult)]
    curves = [d for d in items if isinstance(d, LevelCurve)]
    extent = style.get("extent")
    if extent is None:
        ext = [a.grid.half_side for a in apertures]
        ext += [float(np.max(np.abs(c.samples))) * 1.05 for c in curves]
        extent = max(ext) if ext else 1.0
    size = int(style.get("size", 600))
    margin = 40
    legend_w = 140
    scale = (size - 2 * margin) / (2 * extent)

    def X(x):
        return margin + (x + extent) * scale

    def Y(y):
        return margin + (extent - y) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + legend_w}" height="{size}" '
        f'viewBox="0 0 {size + legend_w} {size}">',
        f'<rect x="0" y="0" width="{size + legend_w}" height="{size}" fill="white"/>',
    ]
    if "title" in style:
        out.append(f'<text x="{margin}" y="{margin // 2}" font-family="sans-serif" font-size="14">'
                   f'{_escape(str(style["title"]))}</text>')
    # axes (equal aspect by construction)
    out.append(f'<g stroke="black" stroke-width="1" fill="none">'
               f'<rect x="{margin}" y="{margin}" width="{size - 2 * margin}" height="{size - 2 * margin}"/>'
               f'<line x1="{_fmt(X(-extent))}" y1="{_fmt(Y(0))}" x2="{_fmt(X(extent))}" y2="{_fmt(Y(0))}" '
               f'stroke="#cccccc"/>'
               f'<line x1="{_fmt(X(0))}" y1="{_fmt(Y(-extent))}" x2="{_fmt(X(0))}" y2="{_fmt(Y(extent))}" '
               f'stroke="#cccccc"/></g>')
    for v in (-extent, 0.0, extent):
        out.append(f'<text x="{_fmt(X(v))}" y="{size - margin + 16}" font-family="sans-serif" font-size="10" '
                   f'text-anchor="middle">{v:.2f}</text>')
        out.append(f'<text x="{margin - 4}" y="{_fmt(Y(v) + 3)}" font-family="sans-serif" font-size="10" '
                   f'text-anchor="end">{v:.2f}</text>')
    legend = []
    rad = style.get("point_radius", 1.5)
    for a in apertures:
        pts = a.survivors
        out.append('<g class="survivors" fill="#999999">')
        for x, y in pts:
            out.append(f'<circle cx="{_fmt(X(x))}" cy="{_fmt(Y(y))}" r="{rad}"/>')
        out.append("</g>")
        legend.append(("#999999", f"survivors N={a.N}", "dot"))
    for k, c in enumerate(curves):
        color = PALETTE[k % len(PALETTE)]
        pts = c.samples[:-1] if np.allclose(c.samples[0], c.samples[-1]) else c.samples
        d = "M " + " L ".join(f"{_fmt(X(x))} {_fmt(Y(y))}" for x, y in pts) + " Z"
        out.append(f'<path class="level-curve" d="{d}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        legend.append((color, f"rho={c.rho:.2f}, r={c.r}", "line"))
    for k, (color, label, kind) in enumerate(legend):
        y = margin + 16 * k + 8
        x0 = size + 4
        if kind == "dot":
            out.append(f'<circle cx="{x0 + 8}" cy="{y - 4}" r="3" fill="{color}"/>')
        else:
            out.append(f'<line x1="{x0}" y1="{y - 4}" x2="{x0 + 16}" y2="{y - 4}" stroke="{color}" '
                       f'stroke-width="2"/>')
        out.append(f'<text x="{x0 + 22}" y="{y}" font-family="sans-serif" font-size="11">{_escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
