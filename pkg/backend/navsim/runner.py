"""
Runtime composition of the two policy levels over one episode
"""
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .config import RunConfig
from .congestion import SectorGrid, UpdateState, action_mask, congestion, sector_to_polar, should_update, update_threshold
from .controllers import LowController
from .high_policy import GreedyHighPolicy, HighObs
from .metrics import EpisodeLog, StepRecord, finalize_episode
from .oracle import OccGrid05, astar_dist, oracle_calls, rasterize, shortest_time
from .perception import LOMapStack, build_lomap, encode_obstacles, minpool, stack_frames
from .scenario import ScenarioSpec, sample_start_goal
from .simulation import Simulation
from .utils import episode_rng
from .validators import point_in_obstacle

logger = logging.getLogger(__name__)


class ScenarioOracle:
    """Pre-episode planner queries: start/goal reachability and the optimal denominators"""

    def __init__(self, spec: ScenarioSpec, cfg: RunConfig):
        self.spec = spec
        self.cfg = cfg
        self.free_grid: OccGrid05 = rasterize(spec.world, 0.0, cfg.oracle.resolution)
        self.inflated_grid: OccGrid05 = rasterize(spec.world, cfg.robot.radius, cfg.oracle.resolution)

    def is_free(self, point) -> bool:
        return self.spec.world.contains(point[0], point[1]) and not point_in_obstacle(self.spec.world, point[0], point[1])

    def reachable(self, a, b) -> bool:
        return astar_dist(self.free_grid, a, b, self.cfg.oracle.snap_radius) is not None

    def optimal(self, start, goal) -> Tuple[Optional[float], Optional[float]]:
        d = astar_dist(self.inflated_grid, start, goal, self.cfg.oracle.snap_radius)
        return d, shortest_time(d, self.cfg.robot.v_max)


@dataclass(frozen=True)
class EpisodeSetup:
    start: Tuple[float, float, float]
    goal: Tuple[float, float]
    optimal_dist: Optional[float]
    optimal_time: Optional[float]


def prepare_episode(spec: ScenarioSpec, cfg: RunConfig, rng: np.random.Generator,
                    oracle: Optional[ScenarioOracle] = None) -> EpisodeSetup:
    oracle = oracle or ScenarioOracle(spec, cfg)
    start, goal = sample_start_goal(spec, rng, oracle.is_free, oracle.reachable)
    d, t = oracle.optimal(start[:2], goal)
    return EpisodeSetup(tuple(start), tuple(goal), d, t)


def run_hierarchical_episode(spec: ScenarioSpec, cfg: RunConfig, high: Optional[GreedyHighPolicy],
                             low: LowController, episode_index: int = 0,
                             oracle: Optional[ScenarioOracle] = None) -> EpisodeLog:
    """
    Run one evaluation episode

    Each control step scans, updates congestion and the trigger distance,
    asks the high level for a new sub-goal when one is due (frozen in the
    world frame until the next update), drives the low level toward it and
    advances the simulation. With high=None the final goal, clipped to the
    lidar range, is the sub-goal throughout. The episode ends on arrival or
    at the horizon. No planner queries happen inside the control loop.
    """
    rng = episode_rng(cfg.seed, episode_index)
    setup = prepare_episode(spec, cfg, rng, oracle)
    sim = Simulation(spec, cfg, rng, setup.start, setup.goal)
    grid = SectorGrid.from_config(cfg.congestion, cfg.lidar)
    cc = cfg.congestion
    policy = "hrl" if high is not None else "flat"

    low.reset()
    update = UpdateState()
    stack: Optional[LOMapStack] = None
    steps: List[StepRecord] = []
    calls_before = oracle_calls.count

    for _ in range(spec.horizon_steps):
        s = sim.scan()
        c_t = congestion(s, cc.d_s)
        d_u = update_threshold(c_t, cc.alpha, cc.beta, cc.d_u_min, cc.d_u_max)
        update = replace(update, c_t=c_t, d_u=d_u)

        if high is not None:
            if should_update(update, (sim.robot.x, sim.robot.y), sim.time, cc.timeout_s):
                lomap = build_lomap(s, cfg.lomap)
                stack = stack_frames(stack, lomap)
                mask = action_mask(lomap, grid, cc.mask_clearance)
                idx = high.select(HighObs(stack, sim.goal_polar()), mask)
                sub = sector_to_polar(idx, grid).anchored(sim.robot.pose)
                update = UpdateState(sub, sim.time, c_t, d_u)
                logger.debug(f"t={sim.time:.1f}s new sub-goal {idx} at {sub.world_point}")
            target = update.current.world_point
            sub_polar = sim.polar_to(target)
        else:
            target = sim.goal
            d, theta = sim.goal_polar()
            sub_polar = (min(d, cfg.lidar.range_max), theta)

        olist = encode_obstacles(minpool(s), cc.d_s)
        cmd = low.command(olist, sub_polar, sim.robot.v, sim.robot.omega, sim.ped_tracks())
        report = sim.step(cmd)
        r = sim.robot
        steps.append(StepRecord(sim.time, r.x, r.y, r.heading, r.v, r.omega,
                                float(target[0]), float(target[1]), c_t, d_u, report.in_contact))
        if sim.distance_to_goal() < cfg.reward.d_limit:
            break

    runtime_calls = oracle_calls.count - calls_before
    if runtime_calls:
        logger.error(f"{runtime_calls} planner queries inside the control loop")
    log = finalize_episode(steps, setup.start, setup.goal, spec.dt, setup.optimal_dist, setup.optimal_time,
                           cfg.reward.d_limit, spec.name, episode_index, cfg.seed, policy, runtime_calls)
    logger.info(f"{spec.name} episode {episode_index}: success={log.success} steps={len(steps)} "
                f"collisions={log.collision_count} path={log.path_length:.2f}m")
    return log
