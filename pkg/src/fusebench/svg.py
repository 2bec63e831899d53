"""Minimal deterministic SVG line-plot writer (no plotting backend needed)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 170, 40, 60

PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)
DASHES = ("", "6,3", "2,2", "8,3,2,3")


def stroke_style(i: int) -> tuple[str, str]:
    """Colour and dash pattern for series ``i``; distinct for the first 40 series."""
    return PALETTE[i % len(PALETTE)], DASHES[(i // len(PALETTE)) % len(DASHES)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_plot(
    series: Sequence[tuple[str, np.ndarray, np.ndarray]],
    *,
    xlim: tuple[float, float],
    ylim: tuple[float, float],
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    xticks: Sequence[tuple[float, str]] = (),
    yticks: Sequence[tuple[float, str]] = (),
    kind: str = "polyline",
) -> str:
    """Render named (x, y) series as an SVG document string.

    ``kind`` selects the element used per series: ``"polyline"`` or ``"path"``.
    """
    if kind not in ("polyline", "path"):
        raise ValueError(f"unknown kind {kind!r}")
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B
    x0, x1 = xlim
    y0, y1 = ylim

    def sx(x):
        return MARGIN_L + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN_T + ph - (np.asarray(y, dtype=float) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{MARGIN_T - 14}" text-anchor="middle" '
                   f'font-size="15">{escape(title)}</text>')
    for v, text in xticks:
        px = float(sx(v))
        out.append(f'<line class="grid" x1="{_fmt(px)}" y1="{MARGIN_T}" x2="{_fmt(px)}" '
                   f'y2="{MARGIN_T + ph}" stroke="#dddddd"/>')
        out.append(f'<text x="{_fmt(px)}" y="{MARGIN_T + ph + 16}" text-anchor="middle" '
                   f'font-size="11">{escape(text)}</text>')
    for v, text in yticks:
        py = float(sy(v))
        out.append(f'<line class="grid" x1="{MARGIN_L}" y1="{_fmt(py)}" x2="{MARGIN_L + pw}" '
                   f'y2="{_fmt(py)}" stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(py + 4)}" text-anchor="end" '
                   f'font-size="11">{escape(text)}</text>')
    if xlabel:
        out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle" '
                   f'font-size="13">{escape(xlabel)}</text>')
    if ylabel:
        cy = MARGIN_T + ph / 2
        out.append(f'<text x="18" y="{cy:.1f}" text-anchor="middle" font-size="13" '
                   f'transform="rotate(-90 18 {cy:.1f})">{escape(ylabel)}</text>')

    for i, (name, x, y) in enumerate(series):
        color, dash = stroke_style(i)
        px = np.clip(sx(x), MARGIN_L, MARGIN_L + pw)
        py = np.clip(sy(y), MARGIN_T, MARGIN_T + ph)
        coords = [(_fmt(a), _fmt(b)) for a, b in zip(px, py)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        style = f'fill="none" stroke="{color}" stroke-width="1.6"{dash_attr}'
        if kind == "polyline":
            pts = " ".join(f"{a},{b}" for a, b in coords)
            out.append(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" {style}/>')
        else:
            d = " ".join(("M" if j == 0 else "L") + f"{a},{b}" for j, (a, b) in enumerate(coords))
            out.append(f'<path class="series" data-name="{escape(name)}" d="{d}" {style}/>')

    lx = MARGIN_L + pw + 12
    for i, (name, _, _) in enumerate(series):
        color, dash = stroke_style(i)
        ly = MARGIN_T + 12 + 18 * i
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line class="legend" x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
