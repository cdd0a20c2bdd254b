"""
Episode simulation state: world, robot, pedestrians and the clock
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .geometry import relative_polar
from .lidar import LidarScan, scan
from .low_policy import PedTrack
from .pedestrians import PedestrianState, spawn_pedestrians, step_pedestrians
from .scenario import ScenarioSpec
from .world import CollisionReport, RobotState, WorldModel, advance_robot, collision_check

logger = logging.getLogger(__name__)


class Simulation:
    """Owns the mutable state of one episode and advances it by dt"""

    def __init__(self, spec: ScenarioSpec, cfg: RunConfig, rng: np.random.Generator,
                 start: Optional[Sequence[float]] = None, goal: Optional[Sequence[float]] = None):
        self.spec = spec
        self.cfg = cfg
        self.rng = rng
        self.world: WorldModel = spec.world
        sx, sy, sh = start if start is not None else spec.robot_start
        self.robot = RobotState(float(sx), float(sy), float(sh), radius=cfg.robot.radius)
        self.goal: Tuple[float, float] = tuple(goal if goal is not None else spec.goal)
        self.peds: List[PedestrianState] = spawn_pedestrians(spec.pedestrians, cfg.pedestrians)
        self.dt = spec.dt
        self.time = 0.0
        self.steps = 0
        self.last_collision = CollisionReport()

    def scan(self) -> LidarScan:
        return scan(self.world, self.peds, self.robot.pose, self.cfg.lidar, self.rng, self.time)

    def step(self, cmd: Sequence[float]) -> CollisionReport:
        """Move the robot, then the pedestrians, then report contact at the new state"""
        self.robot = advance_robot(self.world, self.robot, cmd, self.dt, self.cfg.robot)
        self.peds = step_pedestrians(self.peds, self.world, self.robot, self.dt, self.cfg.pedestrians)
        self.time = (self.steps + 1) * self.dt
        self.steps += 1
        self.last_collision = collision_check(self.world, self.robot, self.peds)
        return self.last_collision

    def polar_to(self, point: Sequence[float]) -> Tuple[float, float]:
        return relative_polar(self.robot.pose, point)

    def goal_polar(self) -> Tuple[float, float]:
        return self.polar_to(self.goal)

    def distance_to_goal(self) -> float:
        return math.hypot(self.goal[0] - self.robot.x, self.goal[1] - self.robot.y)

    def ped_tracks(self) -> List[PedTrack]:
        """Pedestrian positions and velocities in the robot frame"""
        c, s = math.cos(self.robot.heading), math.sin(self.robot.heading)
        tracks = []
        for p in self.peds:
            dx, dy = p.position[0] - self.robot.x, p.position[1] - self.robot.y
            vx, vy = p.velocity
            tracks.append(PedTrack(c * dx + s * dy, -s * dx + c * dy, c * vx + s * vy, -s * vx + c * vy, p.radius))
        return tracks
