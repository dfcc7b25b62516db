"""SVG export of handle documents.

Drawing convention: image border as a gray rectangle outline, subdomain
polygons as black outlines, handles as line segments with one consistent
color per subdomain. Coordinates live in a 0-1000 viewBox.
"""
from __future__ import annotations

from pathlib import Path

PALETTE = ["#c03a2b", "#2e6fb7", "#2f9e44", "#9348b5", "#d97c11",
           "#12808a", "#b02a6e", "#6b6f14"]

_SCALE = 1000.0


def _pt(p):
    return f"{p[0] * _SCALE:g},{p[1] * _SCALE:g}"


def export_svg(doc):
    """Render a HandleDocument to an SVG string."""
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1000 1000">',
        '<rect x="0" y="0" width="1000" height="1000" fill="white" '
        'stroke="#888888" stroke-width="4"/>',
    ]
    for entry in doc.subdomains:
        pts = " ".join(_pt(v) for v in entry.boundary.vertices)
        lines.append(f'<polygon points="{pts}" fill="none" stroke="black" stroke-width="3"/>')
    for i, entry in enumerate(doc.subdomains):
        hs = doc.handle_sets.get(entry.boundary.id)
        if hs is None:
            continue
        color = PALETTE[i % len(PALETTE)]
        for k in range(hs.count):
            x0, y0 = hs.p0[k] * _SCALE
            x1, y1 = hs.p1[k] * _SCALE
            lines.append(f'<line x1="{x0:g}" y1="{y0:g}" x2="{x1:g}" y2="{y1:g}" '
                         f'stroke="{color}" stroke-width="2"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(doc, path):
    Path(path).write_text(export_svg(doc))
