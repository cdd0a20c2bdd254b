"""
Reward functions for both policy levels
"""
import logging
import math
from typing import Callable, Dict, Optional, Sequence

from .config import OracleConfig, RewardConfig
from .oracle import astar_dist, rasterize
from .world import WorldModel

logger = logging.getLogger(__name__)

DistanceFn = Callable[[Sequence[float], Sequence[float]], Optional[float]]


def high_reward_terms(d_t: float, d_prev_astar: Optional[float], d_now_astar: Optional[float],
                      invalid_subgoal: bool, cfg: Optional[RewardConfig] = None) -> Dict[str, float]:
    """
    Individual terms of the high-level reward

    Args:
        d_t: Euclidean distance from the robot to the goal after the segment (m)
        d_prev_astar: Guidance distance before the segment, None when unreachable
        d_now_astar: Guidance distance after the segment, None when unreachable
        invalid_subgoal: The selected sub-goal was near, blocked by or inside an obstacle
        cfg: Reward constants

    Returns:
        Dictionary with arrival, step, dist and out terms
    """
    cfg = cfg or RewardConfig()
    if d_prev_astar is None or d_now_astar is None:
        r_dist = 0.0
        invalid_subgoal = True
    elif cfg.guidance == "sparse":
        r_dist = 0.0
    else:
        r_dist = cfg.mu * (d_prev_astar - d_now_astar)
    return {
        "arrival": cfg.r_arrive_val if d_t < cfg.d_limit else 0.0,
        "step": cfg.r_step_val,
        "dist": r_dist,
        "out": cfg.r_out_val if invalid_subgoal else 0.0,
    }


def high_reward(d_t: float, d_prev_astar: Optional[float], d_now_astar: Optional[float],
                invalid_subgoal: bool, cfg: Optional[RewardConfig] = None) -> float:
    terms = high_reward_terms(d_t, d_prev_astar, d_now_astar, invalid_subgoal, cfg)
    return terms["arrival"] + terms["step"] + terms["dist"] + terms["out"]


def low_reward(d_t_sub: float, d_prev: Optional[float], d_now: Optional[float],
               cfg: Optional[RewardConfig] = None) -> float:
    """Per-control-step reward toward the current sub-goal; collisions are a cost, not a penalty"""
    cfg = cfg or RewardConfig()
    arrival = cfg.r_arrive_val if d_t_sub < cfg.d_limit else 0.0
    if d_prev is None or d_now is None or cfg.low_guidance == "sparse":
        r_dist = 0.0
    else:
        r_dist = cfg.mu * (d_prev - d_now)
    return arrival + cfg.r_step_val + r_dist


def euclidean(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def guidance_distance_fn(mode: str, world: WorldModel, oracle_cfg: Optional[OracleConfig] = None) -> DistanceFn:
    """
    Distance used by the shaping term for a guidance mode

    astar rasterizes the world once and queries the oracle grid; euclidean and
    sparse need no map.
    """
    if mode in ("euclidean", "sparse"):
        return euclidean
    if mode != "astar":
        raise ValueError(f"Unknown guidance mode: {mode}")
    oracle_cfg = oracle_cfg or OracleConfig()
    grid = rasterize(world, oracle_cfg.reward_inflation, oracle_cfg.resolution)

    def distance(a, b):
        return astar_dist(grid, a, b, oracle_cfg.snap_radius)

    return distance
