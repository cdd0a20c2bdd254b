"""
Congestion-triggered sub-goal generation

Environment congestion from a scan, the dynamic sub-goal update distance, the
polar sector action space and the action mask over it.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .config import CongestionConfig, LidarConfig
from .geometry import polar_to_world
from .lidar import LidarScan
from .perception import FREE, OCCUPIED, LocalObstacleMap, line_cells, robot_frame_to_cell

logger = logging.getLogger(__name__)

RANGE_FLOOR = 0.3


@dataclass(frozen=True)
class SectorGrid:
    n_dist: int = 15
    n_ang: int = 15
    d_lo: float = 0.3
    d_hi: float = 6.0

    @classmethod
    def from_config(cls, cfg: CongestionConfig, lidar: Optional[LidarConfig] = None) -> "SectorGrid":
        lidar = lidar or LidarConfig()
        return cls(cfg.n_dist, cfg.n_ang, lidar.range_min, lidar.range_max)

    @property
    def size(self) -> int:
        return self.n_dist * self.n_ang

    @property
    def ring_width(self) -> float:
        return (self.d_hi - self.d_lo) / self.n_dist

    @property
    def wedge_width(self) -> float:
        return 2.0 * math.pi / self.n_ang

    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """(d, theta) of every sector centre, indexed by action"""
        idx = np.arange(self.size)
        ring, wedge = idx // self.n_ang, idx % self.n_ang
        return (self.d_lo + (ring + 0.5) * self.ring_width,
                -math.pi + (wedge + 0.5) * self.wedge_width)


@dataclass(frozen=True)
class SubGoal:
    d_sg: float
    theta_sg: float
    index: Optional[int] = None
    world_point: Optional[Tuple[float, float]] = None

    def anchored(self, pose: Sequence[float]) -> "SubGoal":
        """Freeze the world point for the robot pose at generation time"""
        return replace(self, world_point=subgoal_to_world(pose, self))


@dataclass(frozen=True)
class UpdateState:
    current: Optional[SubGoal] = None
    t_last_update: float = 0.0
    c_t: float = 0.0
    d_u: float = 0.5


def congestion(scan: Union[LidarScan, np.ndarray], d_s: float = 3.0) -> float:
    """
    Mean over rays of 1 / log_{d_s}(l + 1), each range first clamped to >= 0.3

    Args:
        scan: Lidar scan or raw range array
        d_s: Safe distance, also the logarithm base (> 1)

    Returns:
        Congestion C >= 0
    """
    if d_s <= 1.0:
        raise ValueError("d_s must be greater than 1")
    ranges = scan.ranges if isinstance(scan, LidarScan) else np.asarray(scan, dtype=float)
    ranges = np.maximum(ranges, RANGE_FLOOR)
    return float(np.mean(math.log(d_s) / np.log(ranges + 1.0)))


def update_threshold(c: float, alpha: float = 0.25, beta: float = 0.25,
                     d_min: float = 0.5, d_max: float = 2.0) -> float:
    """Sub-goal update distance d_u = clip(alpha * C + beta, d_min, d_max)"""
    return float(min(max(alpha * c + beta, d_min), d_max))


def should_update(state: UpdateState, robot: Sequence[float], now: float, timeout_s: float = 30.0) -> bool:
    """A new sub-goal is due with no current one, within d_u of it, or after the timeout (simulation time)"""
    if state.current is None or state.current.world_point is None:
        return True
    wx, wy = state.current.world_point
    if math.hypot(robot[0] - wx, robot[1] - wy) < state.d_u:
        return True
    return now - state.t_last_update >= timeout_s


def sector_to_polar(idx: int, grid: SectorGrid = SectorGrid()) -> SubGoal:
    if not 0 <= idx < grid.size:
        raise IndexError(f"sector index {idx} out of range [0, {grid.size})")
    ring, wedge = divmod(int(idx), grid.n_ang)
    d = grid.d_lo + (ring + 0.5) * grid.ring_width
    theta = -math.pi + (wedge + 0.5) * grid.wedge_width
    return SubGoal(d, theta, int(idx))


def polar_to_sector(d: float, theta: float, grid: SectorGrid = SectorGrid()) -> int:
    ring = int(math.floor((d - grid.d_lo) / grid.ring_width))
    ring = min(max(ring, 0), grid.n_dist - 1)
    wedge = int(math.floor((theta + math.pi) / grid.wedge_width)) % grid.n_ang
    return ring * grid.n_ang + wedge


def subgoal_to_world(pose: Sequence[float], g: SubGoal) -> Tuple[float, float]:
    return polar_to_world(pose, g.d_sg, g.theta_sg)


def action_mask(lomap: LocalObstacleMap, grid: SectorGrid = SectorGrid(),
                clearance: float = 0.3) -> np.ndarray:
    """
    Allowed sub-goal sectors for the current LOMap

    A sector is allowed when its centre cell is free, no cell on the straight
    line from the robot cell to it is occupied, and its centre keeps at least
    `clearance` from every occupied cell centre. When nothing survives, the
    nearest sector with a free centre cell is allowed.

    Args:
        lomap: Current local obstacle map
        grid: Sector layout
        clearance: Minimum distance from occupied cells (m)

    Returns:
        (n_dist * n_ang,) boolean array, True = allowed
    """
    d, theta = grid.centers()
    fx, ly = d * np.cos(theta), d * np.sin(theta)
    rows, cols = robot_frame_to_cell(fx, ly, lomap.shape, lomap.resolution)
    cells = lomap.grid

    center_free = cells[rows, cols] == FREE
    lr, lc, valid = line_cells(lomap.center_cell, np.stack([rows, cols], axis=1))
    blocked = ((cells[lr, lc] == OCCUPIED) & valid).any(axis=1)

    occ = cells == OCCUPIED
    if occ.any():
        cfx, cly = lomap.cell_centers()
        occ_pts = np.stack([cfx[occ], cly[occ]], axis=1)
        nearest = np.sqrt(((np.stack([fx, ly], axis=1)[:, None, :] - occ_pts[None, :, :]) ** 2).sum(-1)).min(axis=1)
        clear = nearest >= clearance
    else:
        clear = np.ones(grid.size, dtype=bool)

    mask = center_free & ~blocked & clear
    if not mask.any():
        candidates = np.flatnonzero(center_free)
        if len(candidates) == 0:
            candidates = np.arange(grid.size)
        forced = int(candidates[np.argmin(d[candidates])])
        logger.warning(f"All {grid.size} sectors masked, force-allowing sector {forced}")
        mask[forced] = True
    return mask
