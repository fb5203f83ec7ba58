"""Static SVG timelines: one row per labelling, one coloured band per segment."""

from __future__ import annotations

import colorsys
import zlib
from typing import List, Sequence, Tuple
from xml.sax.saxutils import escape

BACKGROUND_NAMES = {"background", "bg", "sil", "silence"}


def class_color(name: str) -> str:
    """Stable colour for a class name; background-like names render white."""
    if name.lower() in BACKGROUND_NAMES:
        return "#ffffff"
    h = zlib.crc32(name.encode("utf-8"))
    hue = (h % 360) / 360.0
    light = 0.45 + ((h >> 9) % 20) / 100.0
    sat = 0.55 + ((h >> 17) % 30) / 100.0
    r, g, b = colorsys.hls_to_rgb(hue, light, sat)
    return "#{:02x}{:02x}{:02x}".format(int(r * 255), int(g * 255), int(b * 255))


def _runs(frames: Sequence[str]) -> List[Tuple[str, int, int]]:
    runs = []
    start = 0
    for t in range(1, len(frames) + 1):
        if t == len(frames) or frames[t] != frames[start]:
            runs.append((frames[start], start, t))
            start = t
    return runs


def render_timelines(rows: Sequence[Tuple[str, Sequence[str]]], width: int = 800, row_height: int = 28,
                     label_width: int = 120) -> str:
    """SVG document with one timeline per ``(title, per-frame class names)`` row."""
    if not rows:
        raise ValueError("nothing to render")
    T = max(len(f) for _, f in rows)
    if T == 0:
        raise ValueError("empty labelling")
    names = sorted({n for _, f in rows for n in f})
    legend_h = 20
    height = len(rows) * (row_height + 6) + legend_h + 10
    scale = (width - label_width - 10) / T
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">']
    for r, (title, frames) in enumerate(rows):
        y = 5 + r * (row_height + 6)
        out.append(f'<text x="4" y="{y + row_height * 0.65:.1f}">{escape(title)}</text>')
        out.append(f'<rect x="{label_width}" y="{y}" width="{len(frames) * scale:.3f}" height="{row_height}" '
                   f'fill="none" stroke="#888"/>')
        for name, s, e in _runs(list(frames)):
            out.append(f'<rect x="{label_width + s * scale:.3f}" y="{y}" width="{(e - s) * scale:.3f}" '
                       f'height="{row_height}" fill="{class_color(name)}"><title>{escape(name)} '
                       f'[{s}, {e})</title></rect>')
    y = height - legend_h
    x = 4.0
    for name in names:
        out.append(f'<rect x="{x:.1f}" y="{y}" width="12" height="12" fill="{class_color(name)}" stroke="#888"/>')
        out.append(f'<text x="{x + 16:.1f}" y="{y + 10}">{escape(name)}</text>')
        x += 24 + 7 * len(name)
    out.append("</svg>")
    return "\n".join(out) + "\n"
