"""SVG renders of maps, SDFs, E-Maps, and trajectories."""

from __future__ import annotations

import numpy as np

from .emap import EMapGraph
from .grids import OccupancyGrid, SignedDistanceField

_SCALE = 100  # svg units per meter


def _header(width_m: float, height_m: float) -> str:
    w, h = width_m * _SCALE, height_m * _SCALE
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" '
            f'height="{h:.0f}" viewBox="0 0 {w:.0f} {h:.0f}">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n')


def _obstacle_rects(grid: OccupancyGrid) -> str:
    res = grid.resolution
    parts = []
    for r in range(grid.height):
        row = grid.cells[r]
        c = 0
        while c < grid.width:
            if row[c]:
                c0 = c
                while c < grid.width and row[c]:
                    c += 1
                parts.append(
                    f'<rect x="{c0 * res * _SCALE:.1f}" '
                    f'y="{r * res * _SCALE:.1f}" '
                    f'width="{(c - c0) * res * _SCALE:.1f}" '
                    f'height="{res * _SCALE:.1f}" fill="#333"/>')
            else:
                c += 1
    return "\n".join(parts) + "\n"


def render_scene(grid: OccupancyGrid, sources=(), destinations=(),
                 trajectories=(), radii=None) -> str:
    """Map with green sources, blue destinations, and trajectory polylines."""
    svg = _header(grid.width * grid.resolution, grid.height * grid.resolution)
    svg += _obstacle_rects(grid)
    colors = ["#d62728", "#9467bd", "#ff7f0e", "#17becf", "#8c564b",
              "#e377c2"]
    for i, traj in enumerate(trajectories):
        pts = " ".join(f"{p[0] * _SCALE:.1f},{p[1] * _SCALE:.1f}"
                       for p in np.asarray(traj))
        svg += (f'<polyline points="{pts}" fill="none" '
                f'stroke="{colors[i % len(colors)]}" stroke-width="2"/>\n')
    for i, s in enumerate(sources):
        rad = (radii[i] if radii else 0.08) * _SCALE
        svg += (f'<circle cx="{s[0] * _SCALE:.1f}" cy="{s[1] * _SCALE:.1f}" '
                f'r="{rad:.1f}" fill="green" fill-opacity="0.8"/>\n')
    for d in destinations:
        svg += (f'<circle cx="{d[0] * _SCALE:.1f}" cy="{d[1] * _SCALE:.1f}" '
                f'r="8" fill="blue" fill-opacity="0.8"/>\n')
    return svg + "</svg>\n"


def render_sdf(sdf: SignedDistanceField) -> str:
    """Heat render: red inside obstacles through white to blue in free space."""
    res = sdf.resolution
    vmax = max(float(np.abs(sdf.values).max()), 1e-9)
    svg = _header(sdf.width * res, sdf.height * res)
    cell = res * _SCALE
    for r in range(sdf.height):
        for c in range(sdf.width):
            v = sdf.values[r, c] / vmax
            if v >= 0:
                color = (f"rgb({int(255 * (1 - v))},{int(255 * (1 - v))},255)")
            else:
                color = (f"rgb(255,{int(255 * (1 + v))},{int(255 * (1 + v))})")
            svg += (f'<rect x="{c * cell:.1f}" y="{r * cell:.1f}" '
                    f'width="{cell:.1f}" height="{cell:.1f}" '
                    f'fill="{color}"/>\n')
    return svg + "</svg>\n"


def render_emap(grid: OccupancyGrid, emap: EMapGraph) -> str:
    """Skeleton graph over the map: edges as lines, feature nodes as dots."""
    res = grid.resolution
    svg = _header(grid.width * res, grid.height * res)
    svg += _obstacle_rects(grid)
    for r, c in zip(*np.nonzero(emap.skeleton)):
        svg += (f'<rect x="{c * res * _SCALE:.1f}" '
                f'y="{r * res * _SCALE:.1f}" width="{res * _SCALE:.1f}" '
                f'height="{res * _SCALE:.1f}" fill="#bbf" />\n')
    for a, b, _w in emap.edges:
        ra, ca = emap.nodes[a]
        rb, cb = emap.nodes[b]
        svg += (f'<line x1="{(ca + 0.5) * res * _SCALE:.1f}" '
                f'y1="{(ra + 0.5) * res * _SCALE:.1f}" '
                f'x2="{(cb + 0.5) * res * _SCALE:.1f}" '
                f'y2="{(rb + 0.5) * res * _SCALE:.1f}" '
                f'stroke="#66c" stroke-width="1"/>\n')
    for _nid, (r, c) in emap.nodes.items():
        svg += (f'<circle cx="{(c + 0.5) * res * _SCALE:.1f}" '
                f'cy="{(r + 0.5) * res * _SCALE:.1f}" r="3" fill="#116"/>\n')
    return svg + "</svg>\n"
