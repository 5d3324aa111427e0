"""Minimal line plots written directly as SVG text."""

from __future__ import annotations

import math
from html import escape
from typing import Sequence

WIDTH, HEIGHT, PAD = 480, 320, 48


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def line_plot(title: str, x: Sequence[float], y: Sequence[float], xlabel: str = "", ylabel: str = "") -> str:
    """Single polyline with axes and five ticks per axis; deterministic output."""
    pts = [(float(a), float(b)) for a, b in zip(x, y) if math.isfinite(a) and math.isfinite(b)]
    if not pts:
        pts = [(0.0, 0.0)]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    sx = lambda v: PAD + (v - x0) / (x1 - x0) * (WIDTH - 2 * PAD)
    sy = lambda v: HEIGHT - PAD - (v - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)
    poly = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in pts)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="10">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="12">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        parts.append(f'<text x="{sx(t):.2f}" y="{HEIGHT - PAD + 14}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        parts.append(f'<text x="{PAD - 4}" y="{sy(t) + 3:.2f}" text-anchor="end">{t:.4g}</text>')
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="12" y="{HEIGHT / 2}" transform="rotate(-90 12 {HEIGHT / 2})" '
                 f'text-anchor="middle">{escape(ylabel)}</text>')
    parts.append(f'<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{poly}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
