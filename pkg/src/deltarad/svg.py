"""Minimal hand-written SVG plots (heatmap, step curves, small multiples).

Coordinates are printed with fixed precision so output bytes are stable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(v: float) -> str:
    return f"{v:.2f}"


class Canvas:
    def __init__(self, width: int, height: int):
        self.w, self.h = width, height
        self.items = []

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.items.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}" stroke="{stroke}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0):
        self.items.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="{stroke}" stroke-width="{_f(width)}"/>'
        )

    def polyline(self, pts, stroke="#000", width=1.0, opacity=1.0):
        s = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.items.append(
            f'<polyline points="{s}" fill="none" stroke="{stroke}" stroke-width="{_f(width)}" stroke-opacity="{_f(opacity)}"/>'
        )

    def text(self, x, y, s, size=10, anchor="start", rotate=None):
        tr = f' transform="rotate({_f(rotate)} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.items.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}"{tr}>{escape(str(s))}</text>'
        )

    def render(self) -> str:
        head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" viewBox="0 0 {self.w} {self.h}">'
        return "\n".join([head, f'<rect width="{self.w}" height="{self.h}" fill="#fff"/>', *self.items, "</svg>"]) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render())
        return path


def _diverging(v: float) -> str:
    """Blue (-1) through white (0) to red (+1); grey for NaN."""
    if not np.isfinite(v):
        return "#cccccc"
    v = max(-1.0, min(1.0, v))
    if v >= 0:
        r, g, b = 255, int(255 * (1 - v)), int(255 * (1 - v))
    else:
        r, g, b = int(255 * (1 + v)), int(255 * (1 + v)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix: np.ndarray, labels: Sequence[str], title: str = "") -> Canvas:
    n = len(labels)
    cell = max(6, min(24, 600 // max(n, 1)))
    margin = 8 + 6 * max((len(s) for s in labels), default=1)
    c = Canvas(margin + n * cell + 20, margin + n * cell + 30)
    if title:
        c.text(margin, 14, title, size=12)
    top = margin + 20
    for i in range(n):
        c.text(margin - 4, top + i * cell + cell * 0.7, labels[i], size=8, anchor="end")
        x = margin + i * cell + cell * 0.7
        c.text(x, top - 4, labels[i], size=8, rotate=-90)
        for j in range(n):
            c.rect(margin + j * cell, top + i * cell, cell, cell, _diverging(matrix[i, j]))
    return c


def _axes(c: Canvas, box, xr, yr, xlabel="", ylabel=""):
    x0, y0, w, h = box
    c.line(x0, y0 + h, x0 + w, y0 + h)
    c.line(x0, y0, x0, y0 + h)
    for k in range(5):
        fx = xr[0] + (xr[1] - xr[0]) * k / 4
        fy = yr[0] + (yr[1] - yr[0]) * k / 4
        px = x0 + w * k / 4
        py = y0 + h - h * k / 4
        c.line(px, y0 + h, px, y0 + h + 3)
        c.text(px, y0 + h + 13, f"{fx:.3g}", size=8, anchor="middle")
        c.line(x0 - 3, py, x0, py)
        c.text(x0 - 5, py + 3, f"{fy:.3g}", size=8, anchor="end")
    if xlabel:
        c.text(x0 + w / 2, y0 + h + 26, xlabel, size=9, anchor="middle")
    if ylabel:
        c.text(x0 - 34, y0 + h / 2, ylabel, size=9, anchor="middle", rotate=-90)


def _scale(v, lo, hi, a, b):
    return a + (b - a) * ((v - lo) / (hi - lo) if hi > lo else 0.5)


def step_curves(curves: Mapping[str, Tuple[np.ndarray, np.ndarray]], title="", xlabel="days", ylabel="survival") -> Canvas:
    """Right-continuous step functions, e.g. Kaplan-Meier curves."""
    c = Canvas(420, 300)
    box = (60, 30, 330, 220)
    tmax = max((float(np.max(t)) for t, _ in curves.values() if len(t)), default=1.0) or 1.0
    _axes(c, box, (0, tmax), (0, 1), xlabel, ylabel)
    if title:
        c.text(box[0], 18, title, size=12)
    x0, y0, w, h = box
    for k, (name, (t, s)) in enumerate(curves.items()):
        col = PALETTE[k % len(PALETTE)]
        pts = []
        for i in range(len(t)):
            px = _scale(t[i], 0, tmax, x0, x0 + w)
            if i:
                pts.append((px, pts[-1][1]))
            pts.append((px, _scale(s[i], 0, 1, y0 + h, y0)))
        pts.append((x0 + w, pts[-1][1]))
        c.polyline(pts, stroke=col, width=1.5)
        c.line(x0 + w - 90, y0 + 12 + 14 * k, x0 + w - 75, y0 + 12 + 14 * k, stroke=col, width=2)
        c.text(x0 + w - 70, y0 + 15 + 14 * k, name, size=9)
    return c


def small_multiples(panels: Mapping[str, Dict[str, Sequence[float]]], xticks: Sequence[str], cols: int = 4) -> Canvas:
    """One panel per feature; one polyline per course over ``xticks``."""
    names = list(panels)
    rows = max(1, -(-len(names) // cols))
    pw, ph = 220, 150
    c = Canvas(cols * pw, rows * ph)
    for n, name in enumerate(names):
        ox, oy = (n % cols) * pw, (n // cols) * ph
        box = (ox + 45, oy + 22, pw - 60, ph - 55)
        traces = panels[name]
        vals = np.array([v for tr in traces.values() for v in tr if np.isfinite(v)] or [0.0])
        lo, hi = float(vals.min()), float(vals.max())
        _axes(c, box, (0, len(xticks) - 1), (lo, hi))
        c.text(ox + 45, oy + 14, name.replace("original_", ""), size=9)
        x0, y0, w, h = box
        for k, tr in enumerate(traces.values()):
            pts = [
                (_scale(i, 0, len(xticks) - 1, x0, x0 + w), _scale(v, lo, hi, y0 + h, y0))
                for i, v in enumerate(tr)
                if np.isfinite(v)
            ]
            if len(pts) > 1:
                c.polyline(pts, stroke=PALETTE[k % len(PALETTE)], width=0.8, opacity=0.6)
    return c
