"""
2D world model, differential-drive kinematics and collision detection
"""
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .config import RobotConfig
from .geometry import normalize_angle, points_in_polygon, points_to_segments, polygon_edges

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


class WorldModel(BaseModel):
    """Static geometry of a scenario; the bounds rectangle acts as an outer wall"""
    model_config = ConfigDict(frozen=True)

    bounds: Tuple[float, float, float, float]
    walls: List[Tuple[float, float, float, float]] = Field(default_factory=list)
    circles: List[Tuple[float, float, float]] = Field(default_factory=list)
    polygons: List[List[Point]] = Field(default_factory=list)

    @field_validator("bounds")
    @classmethod
    def check_bounds(cls, v):
        if not all(math.isfinite(c) for c in v):
            raise ValueError("bounds must be finite")
        if v[2] <= v[0] or v[3] <= v[1]:
            raise ValueError("bounds must satisfy x0 < x1 and y0 < y1")
        return v

    @field_validator("walls", "circles")
    @classmethod
    def check_finite(cls, v):
        for item in v:
            if not all(math.isfinite(c) for c in item):
                raise ValueError("geometry coordinates must be finite")
        return v

    @field_validator("polygons")
    @classmethod
    def check_polygons(cls, v):
        for poly in v:
            if len(poly) < 3:
                raise ValueError("polygons need at least 3 vertices")
            if not all(math.isfinite(c) for p in poly for c in p):
                raise ValueError("polygon vertices must be finite")
        return v

    @property
    def width(self) -> float:
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self) -> float:
        return self.bounds[3] - self.bounds[1]

    @cached_property
    def boundary_segments(self) -> np.ndarray:
        x0, y0, x1, y1 = self.bounds
        return np.array([
            [x0, y0, x1, y0],
            [x1, y0, x1, y1],
            [x1, y1, x0, y1],
            [x0, y1, x0, y0],
        ], dtype=float)

    @cached_property
    def wall_array(self) -> np.ndarray:
        return np.asarray(self.walls, dtype=float).reshape(-1, 4)

    @cached_property
    def circle_array(self) -> np.ndarray:
        return np.asarray(self.circles, dtype=float).reshape(-1, 3)

    @cached_property
    def polygon_edge_array(self) -> np.ndarray:
        if not self.polygons:
            return np.zeros((0, 4))
        return np.vstack([polygon_edges(p) for p in self.polygons])

    @cached_property
    def segment_array(self) -> np.ndarray:
        """All straight static edges: walls, bounds and polygon edges"""
        return np.vstack([self.wall_array, self.boundary_segments, self.polygon_edge_array])

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    def clearance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest static surface; 0 inside a polygon, negative inside a circle"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = points_to_segments(points, self.segment_array).min(axis=1)
        if len(self.circle_array):
            dc = np.linalg.norm(points[:, None, :] - self.circle_array[None, :, 0:2], axis=-1) - self.circle_array[None, :, 2]
            d = np.minimum(d, dc.min(axis=1))
        for poly in self.polygons:
            d = np.where(points_in_polygon(points, poly), 0.0, d)
        return d


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float
    v: float = 0.0
    omega: float = 0.0
    radius: float = 0.105

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def pose(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.heading)


@dataclass(frozen=True)
class Contact:
    kind: str  # wall | static | pedestrian
    id: int


@dataclass(frozen=True)
class CollisionReport:
    contacts: Tuple[Contact, ...] = ()

    @property
    def in_contact(self) -> bool:
        return len(self.contacts) > 0


def clamp_command(cmd: Sequence[float], robot_cfg: RobotConfig) -> Tuple[float, float]:
    v = min(max(float(cmd[0]), 0.0), robot_cfg.v_max)
    w = min(max(float(cmd[1]), -robot_cfg.omega_max), robot_cfg.omega_max)
    return v, w


def step_robot(state: RobotState, cmd: Sequence[float], dt: float,
               robot_cfg: Optional[RobotConfig] = None) -> RobotState:
    """
    Advance the unicycle by exact integration over dt

    Args:
        state: Current robot state
        cmd: (v, omega) command, clamped to the kinematic envelope
        dt: Step length (s)
        robot_cfg: Kinematic limits (defaults to the TurtleBot-class envelope)

    Returns:
        New robot state with renormalized heading
    """
    robot_cfg = robot_cfg or RobotConfig()
    v, w = clamp_command(cmd, robot_cfg)
    th = state.heading
    if abs(w) < 1e-12:
        x = state.x + v * dt * math.cos(th)
        y = state.y + v * dt * math.sin(th)
    else:
        r = v / w
        th_new = th + w * dt
        x = state.x + r * (math.sin(th_new) - math.sin(th))
        y = state.y - r * (math.cos(th_new) - math.cos(th))
    return replace(state, x=x, y=y, heading=normalize_angle(th + w * dt), v=v, omega=w)


def advance_robot(world: WorldModel, state: RobotState, cmd: Sequence[float], dt: float,
                  robot_cfg: Optional[RobotConfig] = None) -> RobotState:
    """step_robot with static geometry blocking translation beyond the penetration tolerance"""
    robot_cfg = robot_cfg or RobotConfig()
    proposed = step_robot(state, cmd, dt, robot_cfg)
    depth_limit = state.radius * (1.0 - robot_cfg.penetration_tolerance)
    before, after = world.clearance(np.array([[state.x, state.y], [proposed.x, proposed.y]]))
    if after < depth_limit and after < before:
        return replace(proposed, x=state.x, y=state.y, v=0.0)
    return proposed


def collision_check(world: WorldModel, robot: RobotState, peds: Sequence = ()) -> CollisionReport:
    """Report every piece of geometry closer to the robot centre than its radius"""
    p = robot.position[None, :]
    contacts: List[Contact] = []

    wall_like = np.vstack([world.wall_array, world.boundary_segments])
    d = points_to_segments(p, wall_like)[0]
    for i in np.flatnonzero(d < robot.radius):
        contacts.append(Contact("wall", int(i)))

    if len(world.circle_array):
        dc = np.linalg.norm(world.circle_array[:, 0:2] - p, axis=1) - world.circle_array[:, 2]
        for i in np.flatnonzero(dc < robot.radius):
            contacts.append(Contact("static", int(i)))
    static_id = len(world.circle_array)
    for j, poly in enumerate(world.polygons):
        inside = points_in_polygon(p, poly)[0]
        dp = 0.0 if inside else points_to_segments(p, polygon_edges(poly))[0].min()
        if dp < robot.radius:
            contacts.append(Contact("static", static_id + j))

    for k, ped in enumerate(peds):
        if np.linalg.norm(np.asarray(ped.position) - robot.position) < robot.radius + ped.radius:
            contacts.append(Contact("pedestrian", k))

    if contacts:
        logger.debug(f"Contact at ({robot.x:.3f}, {robot.y:.3f}): {contacts}")
    return CollisionReport(tuple(contacts))
