"""
Single-line 360 degree lidar simulation by vectorized ray casting
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import LidarConfig
from .geometry import ray_circle_hits, ray_segment_hits
from .world import WorldModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LidarScan:
    """Range readings; ray 0 points along the robot heading, bearings increase counter-clockwise"""
    ranges: np.ndarray
    angle_min: float
    angle_increment: float
    stamp: float = 0.0
    range_min: float = 0.3
    range_max: float = 6.0

    @property
    def n_rays(self) -> int:
        return len(self.ranges)

    @property
    def bearings(self) -> np.ndarray:
        return self.angle_min + np.arange(self.n_rays) * self.angle_increment

    @classmethod
    def constant(cls, value: float, cfg: Optional[LidarConfig] = None, stamp: float = 0.0) -> "LidarScan":
        cfg = cfg or LidarConfig()
        ranges = np.full(cfg.n_rays, float(np.clip(value, cfg.range_min, cfg.range_max)))
        return cls(ranges, 0.0, 2.0 * math.pi / cfg.n_rays, stamp, cfg.range_min, cfg.range_max)

    @classmethod
    def from_ranges(cls, ranges: Sequence[float], cfg: Optional[LidarConfig] = None,
                    stamp: float = 0.0) -> "LidarScan":
        cfg = cfg or LidarConfig()
        r = np.clip(np.asarray(ranges, dtype=float), cfg.range_min, cfg.range_max)
        return cls(r, 0.0, 2.0 * math.pi / len(r), stamp, cfg.range_min, cfg.range_max)


def ray_directions(heading: float, n_rays: int) -> np.ndarray:
    angles = heading + np.arange(n_rays) * (2.0 * math.pi / n_rays)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def raw_ranges(world: WorldModel, peds: Sequence, pose: Sequence[float], n_rays: int) -> np.ndarray:
    """Unclamped first-hit distances per ray; inf where nothing is hit"""
    origin = np.array([pose[0], pose[1]], dtype=float)
    dirs = ray_directions(pose[2], n_rays)
    d = ray_segment_hits(origin, dirs, world.segment_array)
    d = np.minimum(d, ray_circle_hits(origin, dirs, world.circle_array))
    if len(peds):
        ped_circles = np.array([[p.position[0], p.position[1], p.radius] for p in peds], dtype=float)
        d = np.minimum(d, ray_circle_hits(origin, dirs, ped_circles))
    return d


def scan(world: WorldModel, peds: Sequence, pose: Sequence[float],
         cfg: Optional[LidarConfig] = None,
         rng: Optional[np.random.Generator] = None,
         stamp: float = 0.0) -> LidarScan:
    """
    Cast the lidar rays from a robot pose

    Args:
        world: Static geometry; the bounds act as walls
        peds: Pedestrians (anything with position and radius)
        pose: (x, y, heading)
        cfg: Sensor settings
        rng: Noise source, required only when cfg.noise_std > 0
        stamp: Simulation time of the scan (s)

    Returns:
        LidarScan with every range in [range_min, range_max]
    """
    cfg = cfg or LidarConfig()
    d = raw_ranges(world, peds, pose, cfg.n_rays)
    d = np.where(np.isfinite(d), d, cfg.range_max)
    if cfg.noise_std > 0:
        if rng is None:
            raise ValueError("lidar noise requires an rng")
        d = d + rng.normal(0.0, cfg.noise_std, size=d.shape)
    ranges = np.clip(d, cfg.range_min, cfg.range_max)
    return LidarScan(ranges, 0.0, 2.0 * math.pi / cfg.n_rays, stamp, cfg.range_min, cfg.range_max)
