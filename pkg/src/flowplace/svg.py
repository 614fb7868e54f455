"""Cluster-colored SVG layout snapshots, one <rect> per instance plus the core outline."""

from __future__ import annotations

import colorsys
from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np

from .netlist import Kind, Netlist

_GREY = "#9e9e9e"


def palette(n: int) -> list[str]:
    """Golden-ratio hue walk; distinct enough for a few dozen clusters."""
    out = []
    for k in range(n):
        r, g, b = colorsys.hsv_to_rgb((k * 0.618033988749895) % 1.0, 0.65, 0.9)
        out.append(f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}")
    return out


def render_svg(
    netlist: Netlist,
    locations: np.ndarray,
    cluster_of: np.ndarray | None = None,
    path: str | Path | None = None,
    width_px: int = 800,
    title: str | None = None,
) -> str:
    """Return (and optionally write) the SVG text. y grows upward in layout space."""
    full = netlist.full_locations(locations)
    core = netlist.core
    s = width_px / core.width
    h_px = core.height * s
    colors = palette(int(cluster_of.max()) + 1) if cluster_of is not None and cluster_of.size and cluster_of.max() >= 0 else []

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{h_px:.2f}" '
        f'viewBox="0 0 {width_px} {h_px:.2f}">',
    ]
    if title:
        parts.append(f"<title>{_esc(title)}</title>")
    parts.append(f'<rect class="core" x="0" y="0" width="{width_px}" height="{h_px:.2f}" '
                 'fill="white" stroke="black" stroke-width="1"/>')
    for inst in netlist.instances:
        x, y = full[inst.id]
        w, h = inst.width * s, inst.height * s
        px = (x - core.lx) * s - w / 2
        py = h_px - ((y - core.ly) * s + h / 2)
        if inst.kind == Kind.MACRO:
            style = 'fill="none" stroke="black" stroke-width="0.8"'
        elif inst.kind == Kind.TERMINAL:
            style = 'fill="black"'
        else:
            c = cluster_of[inst.id] if cluster_of is not None and inst.id < cluster_of.size else -1
            style = f'fill="{colors[c] if c >= 0 else _GREY}" fill-opacity="0.8"'
        parts.append(f'<rect x="{px:.3f}" y="{py:.3f}" width="{w:.3f}" height="{h:.3f}" {style}/>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _esc(text: str) -> str:
    return quoteattr(text)[1:-1]
