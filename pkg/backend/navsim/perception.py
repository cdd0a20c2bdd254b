"""
Scan encodings: the robot-centric local obstacle map (LOMap) stack for the
high level and the min-pooled, threat-sorted obstacle list for the low level.

LOMap frame: heading-up, row 0 is the far-forward edge, column 0 the far-left
edge. The robot sits on the corner shared by cells (H/2-1, W/2-1) and
(H/2, W/2); cell (H/2, W/2) is treated as the robot cell.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from .config import LomapConfig
from .errors import ShapeMismatchError
from .geometry import normalize_angles
from .lidar import LidarScan

logger = logging.getLogger(__name__)

FREE = 0
OCCUPIED = 100
UNKNOWN = 255

STACK_DEPTH = 4
N_BINS = 36


@dataclass(frozen=True, eq=False)
class LocalObstacleMap:
    grid: np.ndarray  # uint8 of FREE / OCCUPIED / UNKNOWN
    resolution: float = 0.2

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    @property
    def center_cell(self) -> Tuple[int, int]:
        return self.grid.shape[0] // 2, self.grid.shape[1] // 2

    def counts(self) -> Tuple[int, int, int]:
        """(free, occupied, unknown) cell counts"""
        return (int(np.count_nonzero(self.grid == FREE)),
                int(np.count_nonzero(self.grid == OCCUPIED)),
                int(np.count_nonzero(self.grid == UNKNOWN)))

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Robot-frame (forward, left) coordinates of every cell centre, each (H, W)"""
        h, w = self.grid.shape
        rows, cols = np.mgrid[0:h, 0:w]
        fx = (h / 2 - rows - 0.5) * self.resolution
        ly = (w / 2 - cols - 0.5) * self.resolution
        return fx, ly

    def cell_of(self, fx: np.ndarray, ly: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return robot_frame_to_cell(fx, ly, self.grid.shape, self.resolution)

    @cached_property
    def encoding(self) -> np.ndarray:
        return lomap_encoding(self)


def robot_frame_to_cell(fx, ly, shape: Tuple[int, int], resolution: float):
    """Cell indices of robot-frame points, clipped onto the grid"""
    h, w = shape
    row = np.floor(h / 2 - np.asarray(fx) / resolution).astype(int)
    col = np.floor(w / 2 - np.asarray(ly) / resolution).astype(int)
    return np.clip(row, 0, h - 1), np.clip(col, 0, w - 1)


def line_cells(start: Tuple[int, int], ends: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Integer line traversal from one cell to many end cells, end cell excluded

    Args:
        start: (row, col) shared start cell
        ends: (R, 2) end cells

    Returns:
        rows, cols of shape (R, K) and a validity mask of the same shape
    """
    dr = ends[:, 0] - start[0]
    dc = ends[:, 1] - start[1]
    steps = np.maximum(np.abs(dr), np.abs(dc))
    k_max = int(steps.max()) if len(steps) else 0
    k = np.arange(max(k_max, 1))[None, :]
    denom = np.where(steps > 0, steps, 1)[:, None]
    rows = start[0] + np.floor(dr[:, None] * k / denom + 0.5).astype(int)
    cols = start[1] + np.floor(dc[:, None] * k / denom + 0.5).astype(int)
    return rows, cols, k < steps[:, None]


def build_lomap(scan: LidarScan, cfg: Optional[LomapConfig] = None) -> LocalObstacleMap:
    """
    Rasterize one scan into a tri-state robot-centric grid

    Cells crossed before each ray's end cell are free. The end cell is
    occupied when the ray hit something (range below the sensor maximum) and
    free otherwise. Occupied wins over free; everything else stays unknown.

    Args:
        scan: Lidar scan in the robot frame
        cfg: Grid size and resolution

    Returns:
        LocalObstacleMap
    """
    cfg = cfg or LomapConfig()
    shape = (cfg.size, cfg.size)
    grid = np.full(shape, UNKNOWN, dtype=np.uint8)

    bearings = scan.bearings
    fx = scan.ranges * np.cos(bearings)
    ly = scan.ranges * np.sin(bearings)
    end_r, end_c = robot_frame_to_cell(fx, ly, shape, cfg.resolution)
    ends = np.stack([end_r, end_c], axis=1)
    center = (cfg.size // 2, cfg.size // 2)

    rows, cols, valid = line_cells(center, ends)
    grid[rows[valid], cols[valid]] = FREE

    hit = scan.ranges < scan.range_max
    grid[end_r[~hit], end_c[~hit]] = FREE
    grid[end_r[hit], end_c[hit]] = OCCUPIED

    grid[center] = FREE
    return LocalObstacleMap(grid, cfg.resolution)


def lomap_encoding(lomap: LocalObstacleMap) -> np.ndarray:
    """Network channel values: free 0.0, unknown 0.5, occupied 1.0"""
    out = np.full(lomap.grid.shape, 0.5, dtype=np.float32)
    out[lomap.grid == FREE] = 0.0
    out[lomap.grid == OCCUPIED] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class LOMapStack:
    frames: Tuple[LocalObstacleMap, ...]  # newest first

    def to_array(self) -> np.ndarray:
        return np.stack([f.encoding for f in self.frames])


def stack_frames(history: Optional[LOMapStack], new: LocalObstacleMap) -> LOMapStack:
    """Push a LOMap onto the stack; the first map of an episode fills every slot"""
    if history is None:
        return LOMapStack((new,) * STACK_DEPTH)
    for frame in history.frames:
        if frame.shape != new.shape or frame.resolution != new.resolution:
            raise ShapeMismatchError(
                f"LOMap {new.shape}@{new.resolution} does not match stack frames {frame.shape}@{frame.resolution}"
            )
    return LOMapStack((new,) + history.frames[:STACK_DEPTH - 1])


@dataclass(frozen=True, eq=False)
class SparseScan:
    ranges36: np.ndarray
    bearings36: np.ndarray


def minpool(scan: LidarScan, n_bins: int = N_BINS) -> SparseScan:
    """Minimum range per block of consecutive rays; bearing at the centre of each block's span"""
    n = scan.n_rays
    if n % n_bins:
        raise ShapeMismatchError(f"{n} rays cannot be pooled into {n_bins} bins")
    per_bin = n // n_bins
    ranges = scan.ranges.reshape(n_bins, per_bin).min(axis=1)
    centers = np.arange(n_bins) * per_bin + (per_bin - 1) / 2.0
    bearings = scan.angle_min + centers * scan.angle_increment
    return SparseScan(ranges, bearings)


@dataclass(frozen=True)
class ObstacleList:
    """Obstacles within d_s ordered from lowest to highest threat"""
    entries: Tuple[Tuple[float, float], ...]
    d_s: float = 3.0
    capacity: int = N_BINS

    def __len__(self) -> int:
        return len(self.entries)

    def padded(self) -> np.ndarray:
        """(capacity, 2) array with (d_s, 0) sentinels in front of the real entries"""
        out = np.zeros((self.capacity, 2))
        out[:, 0] = self.d_s
        if self.entries:
            out[self.capacity - len(self.entries):] = np.asarray(self.entries)
        return out

    def sentinel_mask(self) -> np.ndarray:
        mask = np.zeros(self.capacity, dtype=bool)
        mask[:self.capacity - len(self.entries)] = True
        return mask

    def points(self) -> np.ndarray:
        """Robot-frame (forward, left) obstacle points, (K, 2)"""
        if not self.entries:
            return np.zeros((0, 2))
        e = np.asarray(self.entries)
        return np.stack([e[:, 0] * np.cos(e[:, 1]), e[:, 0] * np.sin(e[:, 1])], axis=1)


def threat_key(entry: Tuple[float, float]) -> Tuple[float, float]:
    return (-entry[0], -entry[1])


def encode_obstacles(sparse: SparseScan, d_s: float = 3.0, capacity: int = N_BINS) -> ObstacleList:
    """
    Keep bins closer than d_s and order them by ascending threat

    Ascending threat is descending distance; equal distances put the larger
    bearing first. Bearings are wrapped to (-pi, pi].
    """
    if d_s <= 0.3:
        raise ValueError("d_s must exceed the lidar minimum range")
    keep = sparse.ranges36 < d_s
    bearings = normalize_angles(sparse.bearings36[keep])
    entries = sorted(zip(sparse.ranges36[keep].tolist(), bearings.tolist()), key=threat_key)
    return ObstacleList(tuple(entries[-capacity:]), d_s, capacity)
