"""
Low-level controllers that drive the robot toward the current sub-goal
"""
import logging
import math
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np

from .config import RobotConfig, SafetyConfig
from .low_policy import GaussianActor, ObsHistory, PedTrack, act, build_obs, safety_filter
from .perception import ObstacleList

logger = logging.getLogger(__name__)


class LowController(Protocol):
    def reset(self) -> None: ...

    def command(self, olist: ObstacleList, subgoal_polar: Sequence[float], v: float, omega: float,
                peds: Sequence[PedTrack] = ()) -> Tuple[float, float]: ...


class PursuitController:
    """
    Scripted point-to-point controller: turn toward the target, then drive

    Used as the low level while the high-level policy trains and as an
    evaluation option.
    """

    def __init__(self, robot_cfg: Optional[RobotConfig] = None, k_omega: float = 2.0,
                 turn_in_place: float = math.pi / 4, stop_radius: float = 0.05):
        self.robot_cfg = robot_cfg or RobotConfig()
        self.k_omega = k_omega
        self.turn_in_place = turn_in_place
        self.stop_radius = stop_radius

    def reset(self) -> None:
        pass

    def command(self, olist: Optional[ObstacleList], subgoal_polar: Sequence[float], v: float = 0.0,
                omega: float = 0.0, peds: Sequence[PedTrack] = ()) -> Tuple[float, float]:
        d, theta = float(subgoal_polar[0]), float(subgoal_polar[1])
        if d < self.stop_radius:
            return 0.0, 0.0
        w = float(np.clip(self.k_omega * theta, -self.robot_cfg.omega_max, self.robot_cfg.omega_max))
        if abs(theta) > self.turn_in_place:
            return 0.0, w
        speed = min(self.robot_cfg.v_max * math.cos(theta), d)
        return max(speed, 0.0), w


class LearnedController:
    """Deterministic actor with its observation history, optionally behind the safety filter"""

    def __init__(self, actor: GaussianActor, robot_cfg: Optional[RobotConfig] = None,
                 safety_cfg: Optional[SafetyConfig] = None):
        self.actor = actor.eval()
        self.robot_cfg = robot_cfg or RobotConfig()
        self.safety_cfg = safety_cfg or SafetyConfig()
        self.history: Optional[ObsHistory] = None

    def reset(self) -> None:
        self.history = None

    def command(self, olist: ObstacleList, subgoal_polar: Sequence[float], v: float, omega: float,
                peds: Sequence[PedTrack] = ()) -> Tuple[float, float]:
        obs, self.history = build_obs(olist, subgoal_polar, v, omega, self.history, self.robot_cfg)
        action = act(self.actor, obs, stochastic=False)
        cmd = (action.v, action.omega)
        if self.safety_cfg.enabled:
            cmd = safety_filter(cmd, olist, peds, cfg=self.safety_cfg, robot_cfg=self.robot_cfg)
        return cmd
