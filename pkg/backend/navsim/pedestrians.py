"""
Social force pedestrians

Each pedestrian relaxes toward its desired velocity and is pushed away from
other pedestrians, the robot and static geometry by exponential repulsion.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import PedestrianConfig
from .geometry import closest_points_on_segments
from .world import RobotState, WorldModel

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


@dataclass(frozen=True)
class PedestrianState:
    position: Point
    velocity: Point
    goal: Point
    v0: float
    radius: float = 0.25
    tau: float = 0.5
    route: Tuple[Point, ...] = ()
    route_index: int = 0
    loop: bool = True
    stopped: bool = False

    @property
    def speed(self) -> float:
        return math.hypot(self.velocity[0], self.velocity[1])


def spawn_pedestrians(specs: Sequence, cfg: Optional[PedestrianConfig] = None) -> List[PedestrianState]:
    """Initial states at rest from world-file PedestrianSpec records"""
    cfg = cfg or PedestrianConfig()
    peds = []
    for spec in specs:
        route = tuple(tuple(p) for p in spec.route)
        if spec.loop:
            route = route + (tuple(spec.start),)
        peds.append(PedestrianState(
            position=tuple(spec.start),
            velocity=(0.0, 0.0),
            goal=route[0],
            v0=spec.v0,
            radius=cfg.radius,
            tau=cfg.tau,
            route=route,
            route_index=0,
            loop=spec.loop,
        ))
    return peds


def _unit(offset: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(offset, axis=-1)
    safe = np.where(norm > 1e-12, norm, 1.0)
    return np.where((norm > 1e-12)[..., None], offset / safe[..., None], 0.0), norm


def _repulsion(unit: np.ndarray, dist: np.ndarray, reach: np.ndarray, cfg: PedestrianConfig) -> np.ndarray:
    """A * exp((reach - d) / B) along the unit direction"""
    return (cfg.strength * np.exp((reach - dist) / cfg.range))[..., None] * unit


def social_forces(peds: Sequence[PedestrianState], world: WorldModel,
                  robot: Optional[RobotState], cfg: Optional[PedestrianConfig] = None) -> np.ndarray:
    """
    Acceleration acting on each pedestrian

    Args:
        peds: Current pedestrian states
        world: Static geometry; walls, bounds, circles and polygon edges repel
        robot: Robot treated as one more pedestrian, or None
        cfg: Force parameters

    Returns:
        (N, 2) accelerations in m/s^2
    """
    cfg = cfg or PedestrianConfig()
    n = len(peds)
    if n == 0:
        return np.zeros((0, 2))
    pos = np.array([p.position for p in peds], dtype=float)
    vel = np.array([p.velocity for p in peds], dtype=float)
    goal = np.array([p.goal for p in peds], dtype=float)
    v0 = np.array([p.v0 for p in peds], dtype=float)
    tau = np.array([p.tau for p in peds], dtype=float)
    radius = np.array([p.radius for p in peds], dtype=float)
    stopped = np.array([p.stopped for p in peds])

    # accelerate to desired velocity
    to_goal = goal - pos
    norm = np.linalg.norm(to_goal, axis=1)
    e = np.where((norm > 1e-12)[:, None], to_goal / np.where(norm > 1e-12, norm, 1.0)[:, None], 0.0)
    desired = np.where(stopped[:, None], 0.0, v0[:, None] * e)
    force = (desired - vel) / tau[:, None]

    # pedestrian pairs
    if n > 1:
        unit, dab = _unit(pos[:, None, :] - pos[None, :, :])
        fab = _repulsion(unit, dab, radius[:, None] + radius[None, :], cfg)
        fab[np.arange(n), np.arange(n)] = 0.0
        force += fab.sum(axis=1)

    if robot is not None:
        unit, d = _unit(pos - robot.position[None, :])
        force += _repulsion(unit, d, radius + robot.radius, cfg)

    # walls, bounds and polygon edges
    segs = world.segment_array
    if len(segs):
        unit, d = _unit(pos[:, None, :] - closest_points_on_segments(pos, segs))
        force += _repulsion(unit, d, radius[:, None], cfg).sum(axis=1)

    circles = world.circle_array
    if len(circles):
        unit, center_d = _unit(pos[:, None, :] - circles[None, :, 0:2])
        force += _repulsion(unit, center_d - circles[None, :, 2], radius[:, None], cfg).sum(axis=1)
    return force


def _advance_route(ped: PedestrianState, cfg: PedestrianConfig) -> PedestrianState:
    if ped.stopped or not ped.route:
        return ped
    if math.hypot(ped.goal[0] - ped.position[0], ped.goal[1] - ped.position[1]) >= cfg.goal_tolerance:
        return ped
    nxt = ped.route_index + 1
    if nxt >= len(ped.route):
        if not ped.loop:
            return replace(ped, stopped=True)
        nxt = 0
    return replace(ped, route_index=nxt, goal=ped.route[nxt])


def cap_speed(v: np.ndarray, cap: float) -> np.ndarray:
    """Rescale v so its norm never exceeds cap"""
    speed = math.hypot(v[0], v[1])
    if speed <= cap:
        return v
    v = v * (cap / speed)
    # rounding can leave the norm an ulp above the cap
    while math.hypot(v[0], v[1]) > cap:
        v = np.nextafter(v, 0.0)
    return v


def step_pedestrians(peds: Sequence[PedestrianState], world: WorldModel, robot: Optional[RobotState],
                     dt: float, cfg: Optional[PedestrianConfig] = None) -> List[PedestrianState]:
    """
    Semi-implicit Euler step of the social force model

    Velocities are capped at 1.3 * v0; a pedestrian within the goal tolerance
    re-targets to the next route point, or stops when its route is exhausted
    and looping is off.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cfg = cfg or PedestrianConfig()
    if not peds:
        return []
    accel = social_forces(peds, world, robot, cfg)
    out = []
    for ped, a in zip(peds, accel):
        v = np.asarray(ped.velocity) + dt * a
        v = cap_speed(v, cfg.speed_cap * ped.v0)
        p = np.asarray(ped.position) + dt * v
        moved = replace(ped, position=(float(p[0]), float(p[1])), velocity=(float(v[0]), float(v[1])))
        out.append(_advance_route(moved, cfg))
    return out
