"""Skeleton-derived environment graphs and initial path construction.

The E-Map is a weighted graph whose nodes are feature pixels of the
skeleton (junctions, endpoints, corners) and whose edges are skeleton
arcs, weighted by arc length in meters. Initial trajectories are built by
snapping source/destination onto the skeleton, running A* over the graph,
shortcutting the traversed feature nodes by line of sight, and sampling
support states uniformly in arc length along the resulting polyline.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grids import InputError, OccupancyGrid

_SQRT2 = math.sqrt(2.0)
# 8-neighbourhood, clockwise from north.
_RING = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
# Two path directions count as a corner when the turn exceeds 45 degrees,
# i.e. the neighbour vectors' angle is below 135 degrees.
_CORNER_DOT = math.cos(3 * math.pi / 4) + 1e-9


@dataclass
class EMapGraph:
    """Weighted feature-node graph over a skeleton."""

    nodes: dict  # node_id -> (row, col)
    adjacency: dict  # node_id -> list of (node_id, weight meters)
    skeleton: np.ndarray  # bool grid the nodes live on
    resolution: float
    node_at: dict = field(default_factory=dict)  # (row, col) -> node_id

    @property
    def edges(self):
        """Undirected edge list (a, b, weight), each edge once."""
        seen = set()
        out = []
        for a, nbrs in self.adjacency.items():
            for b, w in nbrs:
                key = (min(a, b), max(a, b), round(w, 12))
                if key not in seen:
                    seen.add(key)
                    out.append((a, b, w))
        return out

    def export_text(self) -> str:
        """Plain-text adjacency dump: node and edge records, one per line."""
        lines = []
        for nid in sorted(self.nodes):
            r, c = self.nodes[nid]
            lines.append(f"node {nid} {c} {r}")
        for a, b, w in sorted(self.edges):
            lines.append(f"edge {a} {b} {w:.9g}")
        return "\n".join(lines) + "\n"


def _ring_values(skel: np.ndarray, r: int, c: int):
    h, w = skel.shape
    vals = []
    for dr, dc in _RING:
        rr, cc = r + dr, c + dc
        vals.append(bool(0 <= rr < h and 0 <= cc < w and skel[rr, cc]))
    return vals


def _is_feature(skel: np.ndarray, r: int, c: int) -> bool:
    """Endpoints, junctions, isolated pixels, and >45-degree corners."""
    ring = _ring_values(skel, r, c)
    nbrs = [d for d, on in zip(_RING, ring) if on]
    n = len(nbrs)
    if n != 2:
        return True
    (r1, c1), (r2, c2) = nbrs
    u1 = np.array([r1, c1]) / math.hypot(r1, c1)
    u2 = np.array([r2, c2]) / math.hypot(r2, c2)
    return float(u1 @ u2) > _CORNER_DOT


def extract_feature_nodes(skel: np.ndarray, resolution: float) -> EMapGraph:
    """Build the E-Map graph from a skeleton bitmap.

    Edges connect feature nodes joined by a skeleton arc with no
    intervening feature node; weights are arc lengths (unit and diagonal
    pixel steps, scaled to meters).
    """
    if not skel.any():
        raise InputError("empty skeleton")
    feature_pixels = [
        (r, c) for r, c in zip(*np.nonzero(skel)) if _is_feature(skel, r, c)
    ]
    nodes = {i: (int(r), int(c)) for i, (r, c) in enumerate(feature_pixels)}
    node_at = {pos: nid for nid, pos in nodes.items()}
    adjacency = {nid: [] for nid in nodes}
    used = set()  # directed first steps already traced

    for nid, (r, c) in nodes.items():
        for dr, dc in _RING:
            start_step = ((r, c), (r + dr, c + dc))
            rr, cc = r + dr, c + dc
            h, w = skel.shape
            if not (0 <= rr < h and 0 <= cc < w and skel[rr, cc]):
                continue
            if start_step in used:
                continue
            length, end = _trace_arc(skel, node_at, (r, c), (rr, cc), used)
            if end is None:
                continue
            end_id = node_at[end]
            if end_id == nid and length == 0:
                continue
            adjacency[nid].append((end_id, length * resolution))
            if end_id != nid:
                adjacency[end_id].append((nid, length * resolution))

    return EMapGraph(nodes, adjacency, skel, resolution, node_at)


def _trace_arc(skel, node_at, start, first, used):
    """Walk an arc from a feature node until the next feature node."""
    prev = start
    cur = first
    used.add((prev, cur))
    length = _step_len(prev, cur)
    while cur not in node_at:
        nbrs = [
            (cur[0] + dr, cur[1] + dc)
            for dr, dc in _RING
            if 0 <= cur[0] + dr < skel.shape[0]
            and 0 <= cur[1] + dc < skel.shape[1]
            and skel[cur[0] + dr, cur[1] + dc]
        ]
        nxt = [p for p in nbrs if p != prev]
        if len(nxt) != 1:
            return length, None  # malformed arc; skip it
        used.add((cur, nxt[0]))
        prev, cur = cur, nxt[0]
        length += _step_len(prev, cur)
    used.add((cur, prev))  # block re-tracing from the far end
    return length, cur


def _step_len(a, b) -> float:
    return _SQRT2 if (a[0] != b[0] and a[1] != b[1]) else 1.0


def octile(dx: float, dy: float) -> float:
    """Octile distance: diagonal moves cost sqrt(2), straight moves 1."""
    dx, dy = abs(dx), abs(dy)
    return max(dx, dy) + (_SQRT2 - 1) * min(dx, dy)


def astar_octile(emap: EMapGraph, start_node: int, end_node: int):
    """Minimum-weight node path via A* with the octile heuristic.

    Returns the node-id path (start and end inclusive) or None when the
    nodes are disconnected.
    """
    if start_node not in emap.nodes or end_node not in emap.nodes:
        raise InputError("start or end node not in E-Map")
    goal = emap.nodes[end_node]
    res = emap.resolution

    def h(nid):
        r, c = emap.nodes[nid]
        return octile(c - goal[1], r - goal[0]) * res

    open_heap = [(h(start_node), start_node)]
    g = {start_node: 0.0}
    came = {}
    closed = set()
    while open_heap:
        _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == end_node:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            return path[::-1]
        closed.add(cur)
        for nb, w in emap.adjacency[cur]:
            cand = g[cur] + w
            if cand < g.get(nb, math.inf) - 1e-15:
                g[nb] = cand
                came[nb] = cur
                heapq.heappush(open_heap, (cand + h(nb), nb))
    return None


def path_cost(emap: EMapGraph, path) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += min(w for nb, w in emap.adjacency[a] if nb == b)
    return total


def snap_to_skeleton(skel: np.ndarray, row: float, col: float,
                     mask: np.ndarray | None = None):
    """Nearest skeleton pixel by Euclidean distance, row-major tie-break.

    ``mask`` optionally restricts the candidate pixels (e.g. to one
    free-space component). Returns None when no candidate exists.
    """
    candidates = skel if mask is None else (skel & mask)
    rows, cols = np.nonzero(candidates)
    if rows.size == 0:
        return None
    d2 = (rows - row) ** 2 + (cols - col) ** 2
    i = int(np.argmin(d2))  # argmin scans row-major
    return int(rows[i]), int(cols[i])


def _nearest_feature_pixel(emap: EMapGraph, pixel):
    """BFS along the skeleton from ``pixel`` to the first feature node."""
    from collections import deque

    if pixel in emap.node_at:
        return pixel
    h, w = emap.skeleton.shape
    seen = {pixel}
    queue = deque([pixel])
    while queue:
        r, c = queue.popleft()
        for dr, dc in _RING:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w and emap.skeleton[rr, cc]):
                continue
            if (rr, cc) in seen:
                continue
            if (rr, cc) in emap.node_at:
                return (rr, cc)
            seen.add((rr, cc))
            queue.append((rr, cc))
    return None


def _astar_pixels(skel: np.ndarray, start, goal):
    """Shortest pixel path along the skeleton (8-connected, octile costs)."""
    h, w = skel.shape
    open_heap = [(octile(goal[1] - start[1], goal[0] - start[0]), start)]
    g = {start: 0.0}
    came = {}
    closed = set()
    while open_heap:
        _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            return path[::-1]
        closed.add(cur)
        for dr, dc in _RING:
            rr, cc = cur[0] + dr, cur[1] + dc
            if not (0 <= rr < h and 0 <= cc < w and skel[rr, cc]):
                continue
            cand = g[cur] + _step_len(cur, (rr, cc))
            if cand < g.get((rr, cc), math.inf) - 1e-15:
                g[(rr, cc)] = cand
                came[(rr, cc)] = cur
                heapq.heappush(open_heap, (
                    cand + octile(goal[1] - cc, goal[0] - rr), (rr, cc)))
    return None


def find_aux_nodes(emap: EMapGraph, feasible_grid: OccupancyGrid,
                   source, dest):
    """Auxiliary nodes along the skeleton route from source to dest.

    Source and destination are world positions; they are snapped to the
    nearest skeleton pixel and routed along the skeleton. The returned
    list keeps every pixel where the route changes direction (a superset
    of the feature nodes it passes), so straight segments between
    consecutive aux nodes stay on the skeleton. Returns None when either
    endpoint is infeasible or no skeleton route exists. Each endpoint only
    snaps to skeleton pixels inside its own free-space component, so a
    destination in a walled-off pocket never borrows the skeleton of a
    different region.
    """
    res = feasible_grid.resolution
    if feasible_grid.is_occupied(source) or feasible_grid.is_occupied(dest):
        return None
    labels, _ = ndimage.label(~feasible_grid.cells, np.ones((3, 3), int))
    s_cell = feasible_grid.world_to_cell(source)
    d_cell = feasible_grid.world_to_cell(dest)
    s_pix = snap_to_skeleton(emap.skeleton, source[1] / res - 0.5,
                             source[0] / res - 0.5,
                             labels == labels[s_cell])
    d_pix = snap_to_skeleton(emap.skeleton, dest[1] / res - 0.5,
                             dest[0] / res - 0.5,
                             labels == labels[d_cell])
    if s_pix is None or d_pix is None:
        return None
    pixel_path = _astar_pixels(emap.skeleton, s_pix, d_pix)
    if pixel_path is None:
        return None
    keep = []
    for i, pix in enumerate(pixel_path):
        if 0 < i < len(pixel_path) - 1:
            before = (pix[0] - pixel_path[i - 1][0],
                      pix[1] - pixel_path[i - 1][1])
            after = (pixel_path[i + 1][0] - pix[0],
                     pixel_path[i + 1][1] - pix[1])
            if before == after:
                continue  # collinear: interior of a straight run
        keep.append(pix)
    return [np.array([(c + 0.5) * res, (r + 0.5) * res]) for r, c in keep]


def traversed_cells(grid: OccupancyGrid, p0, p1):
    """Supercover traversal: every cell the segment p0->p1 passes through."""
    res = grid.resolution
    x0, y0 = p0[0] / res, p0[1] / res
    x1, y1 = p1[0] / res, p1[1] / res
    col = int(np.floor(x0))
    row = int(np.floor(y0))
    col_end = int(np.floor(x1))
    row_end = int(np.floor(y1))
    cells = [(row, col)]
    dx = x1 - x0
    dy = y1 - y0
    step_c = 1 if dx > 0 else -1
    step_r = 1 if dy > 0 else -1
    t_max_c = math.inf if dx == 0 else ((col + (step_c > 0)) - x0) / dx
    t_max_r = math.inf if dy == 0 else ((row + (step_r > 0)) - y0) / dy
    t_dc = math.inf if dx == 0 else abs(1.0 / dx)
    t_dr = math.inf if dy == 0 else abs(1.0 / dy)
    guard = 4 * (abs(col_end - col) + abs(row_end - row)) + 8
    while (row, col) != (row_end, col_end) and guard > 0:
        guard -= 1
        if abs(t_max_c - t_max_r) < 1e-12:
            # Exact corner crossing: include both side cells (supercover).
            cells.append((row, col + step_c))
            cells.append((row + step_r, col))
            col += step_c
            row += step_r
            t_max_c += t_dc
            t_max_r += t_dr
        elif t_max_c < t_max_r:
            col += step_c
            t_max_c += t_dc
        else:
            row += step_r
            t_max_r += t_dr
        cells.append((row, col))
    return cells


def line_of_sight(grid: OccupancyGrid, p0, p1) -> bool:
    """True when the segment's rasterization crosses no occupied cell."""
    for row, col in traversed_cells(grid, p0, p1):
        if not (0 <= row < grid.height and 0 <= col < grid.width):
            return False
        if grid.cells[row, col]:
            return False
    return True


def reduce_nodes(aux, feasible_grid: OccupancyGrid, source, dest):
    """Greedy line-of-sight shortcutting over [source, aux..., dest].

    Returns the reduced waypoint list (source and dest included); every
    consecutive pair has a clear line of sight on the feasible grid.
    """
    pts = [np.asarray(source, dtype=float)]
    pts += [np.asarray(p, dtype=float) for p in aux]
    pts.append(np.asarray(dest, dtype=float))
    reduced = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not line_of_sight(feasible_grid, pts[i], pts[j]):
            j -= 1
        reduced.append(pts[j])
        i = j
    return reduced


@dataclass
class InitialPath:
    """Waypoints plus uniformly-spaced support states for one agent/role."""

    agent_id: str
    role_id: str
    waypoints: list  # world positions, source first, destination last
    states: np.ndarray  # (N+1, 4): x, y, vx, vy
    dt: float


def make_init_path(nodes, source, dest, n_steps: int, total_time: float,
                   agent_id: str = "", role_id: str = "") -> InitialPath:
    """Distribute N+1 support states at equal arc length along a polyline.

    Velocities are central finite differences of the sampled positions
    over ``dt = total_time / n_steps`` (one-sided at the endpoints).
    """
    if n_steps < 1:
        raise InputError("n_steps must be >= 1")
    pts = [np.asarray(p, dtype=float) for p in nodes]
    if len(pts) < 2:
        pts = [np.asarray(source, dtype=float), np.asarray(dest, dtype=float)]
    seg_len = np.array([np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])])
    total = float(seg_len.sum())
    dt = total_time / n_steps
    positions = np.empty((n_steps + 1, 2))
    if total <= 1e-12:
        positions[:] = pts[0]
    else:
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        targets = np.linspace(0.0, total, n_steps + 1)
        seg = 0
        for k, s in enumerate(targets):
            while seg < len(seg_len) - 1 and s > cum[seg + 1] + 1e-12:
                seg += 1
            if seg_len[seg] <= 1e-12:
                positions[k] = pts[seg]
            else:
                frac = (s - cum[seg]) / seg_len[seg]
                positions[k] = pts[seg] + frac * (pts[seg + 1] - pts[seg])

    velocities = np.zeros_like(positions)
    if n_steps >= 1:
        velocities[1:-1] = (positions[2:] - positions[:-2]) / (2 * dt)
        velocities[0] = (positions[1] - positions[0]) / dt
        velocities[-1] = (positions[-1] - positions[-2]) / dt
    states = np.hstack([positions, velocities])
    return InitialPath(agent_id, role_id, pts, states, dt)
