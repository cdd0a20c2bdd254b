"""
Training-time A* distances on a 0.5 m occupancy grid

Used for shaping rewards and for the SPL / SNT denominators; the deployed
policies never call into this module.
"""
import heapq
import logging
import math
import threading
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .geometry import points_in_polygon, points_to_rects, segment_to_rects
from .world import WorldModel

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

# (d_row, d_col, is_diagonal)
_MOVES = (
    (-1, 0, False), (1, 0, False), (0, -1, False), (0, 1, False),
    (-1, -1, True), (-1, 1, True), (1, -1, True), (1, 1, True),
)


class OracleCallCounter:
    """Counts A* queries so callers can prove a loop never consulted the map"""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def increment(self):
        with self._lock:
            self.count += 1


oracle_calls = OracleCallCounter()


@dataclass(frozen=True, eq=False)
class OccGrid05:
    """Boolean occupancy; row index follows y, column index follows x"""
    cells: np.ndarray
    resolution: float
    origin: Tuple[float, float]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        rows, cols = self.cells.shape
        return min(max(row, 0), rows - 1), min(max(col, 0), cols - 1)

    def center_of(self, row: int, col: int) -> Tuple[float, float]:
        return (self.origin[0] + (col + 0.5) * self.resolution,
                self.origin[1] + (row + 0.5) * self.resolution)

    def without(self, row: int, col: int) -> "OccGrid05":
        cells = self.cells.copy()
        cells[row, col] = False
        return OccGrid05(cells, self.resolution, self.origin)


def _cell_rects(world: WorldModel, resolution: float) -> Tuple[np.ndarray, int, int]:
    x0, y0, x1, y1 = world.bounds
    nx = int(math.ceil((x1 - x0) / resolution - 1e-9))
    ny = int(math.ceil((y1 - y0) / resolution - 1e-9))
    cols, rows = np.meshgrid(np.arange(nx), np.arange(ny))
    rx0 = x0 + cols.ravel() * resolution
    ry0 = y0 + rows.ravel() * resolution
    rects = np.stack([rx0, ry0, rx0 + resolution, ry0 + resolution], axis=1)
    return rects, ny, nx


def rasterize(world: WorldModel, inflation: float = 0.0, resolution: float = 0.5) -> OccGrid05:
    """
    Rasterize static geometry onto the oracle grid

    A cell is occupied when any wall, circle or polygon, grown by `inflation`,
    touches the cell square. The bounds are the grid edge rather than geometry.

    Args:
        world: Scenario geometry
        inflation: Growth radius (m), >= 0
        resolution: Cell size (m)

    Returns:
        OccGrid05 covering the world bounds
    """
    if inflation < 0:
        raise ValueError("inflation must be >= 0")
    rects, ny, nx = _cell_rects(world, resolution)
    eps = 1e-9
    occupied = np.zeros(len(rects), dtype=bool)
    for seg in world.wall_array:
        occupied |= segment_to_rects(seg, rects) <= inflation + eps
    if len(world.circle_array):
        d = points_to_rects(world.circle_array[:, 0:2], rects) - world.circle_array[:, 2:3]
        occupied |= (d <= inflation + eps).any(axis=0)
    centers = np.stack([(rects[:, 0] + rects[:, 2]) / 2, (rects[:, 1] + rects[:, 3]) / 2], axis=1)
    for poly in world.polygons:
        occupied |= points_in_polygon(centers, poly)
        for edge in np.asarray(
                [list(poly[i]) + list(poly[(i + 1) % len(poly)]) for i in range(len(poly))], dtype=float):
            occupied |= segment_to_rects(edge, rects) <= inflation + eps
    return OccGrid05(occupied.reshape(ny, nx), resolution, (world.bounds[0], world.bounds[1]))


def _cell_index(offset: float, resolution: float, n: int) -> int:
    """Floor index, with the closed upper edge of the grid mapped to the last cell"""
    i = math.floor(offset / resolution)
    if i == n and offset <= n * resolution + 1e-9:
        return n - 1
    return i


def _snap(grid: OccGrid05, x: float, y: float, snap_radius: float) -> Optional[Tuple[int, int]]:
    """Cell of (x, y), or the nearest free cell whose centre is within snap_radius"""
    rows, cols = grid.shape
    col = _cell_index(x - grid.origin[0], grid.resolution, cols)
    row = _cell_index(y - grid.origin[1], grid.resolution, rows)
    if not (0 <= row < rows and 0 <= col < cols):
        return None
    if not grid.cells[row, col]:
        return row, col
    free_r, free_c = np.nonzero(~grid.cells)
    if len(free_r) == 0:
        return None
    cx = grid.origin[0] + (free_c + 0.5) * grid.resolution
    cy = grid.origin[1] + (free_r + 0.5) * grid.resolution
    d = np.hypot(cx - x, cy - y)
    # np.nonzero is row-major, so argmin breaks ties by the lowest index
    best = int(np.argmin(d))
    if d[best] > snap_radius:
        return None
    return int(free_r[best]), int(free_c[best])


def _octile(a: Tuple[int, int], b: Tuple[int, int]) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (max(dr, dc) - min(dr, dc)) + SQRT2 * min(dr, dc)


def astar_dist(grid: OccGrid05, a: Sequence[float], b: Sequence[float],
               snap_radius: float = 1.0) -> Optional[float]:
    """
    8-connected shortest path length in meters, or None when unreachable

    Diagonal moves need both orthogonal neighbours free (no corner cutting).
    The open list is ordered by lower f, then higher g, then row-major index.
    The returned length is rebuilt from the straight/diagonal move counts so
    equal-length paths always report the same float.
    """
    oracle_calls.increment()
    start = _snap(grid, a[0], a[1], snap_radius)
    goal = _snap(grid, b[0], b[1], snap_radius)
    if start is None or goal is None:
        return None
    if start == goal:
        return 0.0

    rows, cols = grid.shape
    cells = grid.cells
    best = {start: (0, 0)}
    open_heap = [(_octile(start, goal), 0.0, start[0] * cols + start[1], start, 0, 0)]
    closed = set()
    while open_heap:
        _, neg_g, _, node, n_s, n_d = heapq.heappop(open_heap)
        if node in closed:
            continue
        if node == goal:
            return grid.resolution * (n_s + SQRT2 * n_d)
        closed.add(node)
        r, c = node
        for dr, dc, diag in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or cells[nr, nc]:
                continue
            if diag and (cells[r + dr, c] or cells[r, c + dc]):
                continue
            nxt = (nr, nc)
            if nxt in closed:
                continue
            cand = (n_s, n_d + 1) if diag else (n_s + 1, n_d)
            g = cand[0] + SQRT2 * cand[1]
            prev = best.get(nxt)
            if prev is not None and prev[0] + SQRT2 * prev[1] <= g:
                continue
            best[nxt] = cand
            heapq.heappush(open_heap, (g + _octile(nxt, goal), -g, nr * cols + nc, nxt, cand[0], cand[1]))
    return None


def shortest_time(dist: Optional[float], v_max: float) -> Optional[float]:
    """Minimum travel time for a distance at full speed; None propagates unreachable"""
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    if dist is None:
        return None
    return dist / v_max
