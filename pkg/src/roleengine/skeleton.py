"""Morphological thinning of free space and stair-artifact removal."""

from __future__ import annotations

import numpy as np

from ._kernels import thin_pass
from .grids import OccupancyGrid

# 8-neighbourhood, clockwise from north (Zhang-Suen P2..P9 order).
_RING = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def skeletonize(grid: OccupancyGrid) -> np.ndarray:
    """Thin the free space of ``grid`` to a 1-pixel-wide skeleton.

    Two-subiteration morphological thinning applied until fixpoint,
    followed by a pruning pass that breaks up any residual 2x2 blocks
    while preserving local connectivity. Returns a bool array of the
    grid's shape; skeleton pixels are a subset of the free cells.
    """
    free = ~grid.cells
    if not free.any():
        raise ValueError("grid has no free cells")
    img = np.ascontiguousarray(np.pad(free, 1).astype(np.uint8))
    while True:
        removed = thin_pass(img, 0)
        removed += thin_pass(img, 1)
        if removed == 0:
            break
    skel = img[1:-1, 1:-1].astype(bool)
    _prune_blocks(skel)
    return skel


def _neighbors(skel: np.ndarray, r: int, c: int):
    h, w = skel.shape
    out = []
    for dr, dc in _RING:
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and skel[rr, cc]:
            out.append((rr, cc))
    return out

def _crossing_number(skel: np.ndarray, r: int, c: int) -> int:
    """0->1 transitions around the pixel (Zhang-Suen A)."""
    h, w = skel.shape
    ring = []
    for dr, dc in _RING:
        rr, cc = r + dr, c + dc
        ring.append(1 if 0 <= rr < h and 0 <= cc < w and skel[rr, cc] else 0)
    return sum(1 for i in range(8) if ring[i] == 0 and ring[(i + 1) % 8] == 1)


def _prune_blocks(skel: np.ndarray) -> None:
    """Remove one deletable pixel from every fully-set 2x2 block, in place."""
    changed = True
    while changed:
        changed = False
        blocks = (skel[:-1, :-1] & skel[:-1, 1:] & skel[1:, :-1] & skel[1:, 1:])
        for r, c in zip(*np.nonzero(blocks)):
            for dr, dc in ((0, 0), (0, 1), (1, 0), (1, 1)):
                rr, cc = r + dr, c + dc
                if not skel[rr, cc]:
                    continue
                n = len(_neighbors(skel, rr, cc))
                # Simple point (crossing number 1) or fully interior:
                # deletion cannot split the skeleton.
                if n == 8 or (n >= 2 and _crossing_number(skel, rr, cc) == 1):
                    skel[rr, cc] = False
                    changed = True
                    break


def destair(skel: np.ndarray) -> np.ndarray:
    """Rewrite single-pixel staircase steps into diagonal runs.

    A step pixel has exactly two skeleton neighbours that are themselves
    8-adjacent to each other; removing it leaves the diagonal shortcut, so
    connectivity is preserved. Applied until fixpoint (idempotent).
    """
    out = skel.copy()
    changed = True
    while changed:
        changed = False
        for r, c in zip(*np.nonzero(out)):
            nbrs = _neighbors(out, r, c)
            if len(nbrs) != 2:
                continue
            (r1, c1), (r2, c2) = nbrs
            if max(abs(r1 - r2), abs(c1 - c2)) == 1:
                out[r, c] = False
                changed = True
    return out
