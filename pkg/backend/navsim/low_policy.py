"""
Sub-goal-conditioned low-level motion policy

Observation frames (threat-sorted obstacles, sub-goal polar, odometry) with a
four-step history, a squashed Gaussian actor, reward and cost critics, GAE
and the deployment-time speed filter.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn
from torch.distributions import Independent, Normal

from .autodiff import Affine, fan_in_uniform_, relu, resolve_dtype, seeded_generator
from .config import LowNetConfig, RobotConfig, SafetyConfig
from .perception import ObstacleList

logger = logging.getLogger(__name__)

FRAME_WIDTH = 76  # 36 x 2 obstacle code + sub-goal polar + (v, omega)
HISTORY = 4


def frame_vector(olist: ObstacleList, subgoal_polar: Sequence[float], v: float, omega: float,
                 robot_cfg: Optional[RobotConfig] = None, range_max: float = 6.0) -> np.ndarray:
    """Normalized 76-wide observation frame"""
    robot_cfg = robot_cfg or RobotConfig()
    code = olist.padded().copy()
    code[:, 0] /= olist.d_s
    code[:, 1] /= math.pi
    tail = np.array([
        min(subgoal_polar[0], range_max) / range_max,
        subgoal_polar[1] / math.pi,
        v / robot_cfg.v_max,
        omega / robot_cfg.omega_max,
    ])
    return np.concatenate([code.ravel(), tail])


@dataclass(frozen=True, eq=False)
class ObsHistory:
    """Frames H_t, H_t-1, H_t-2, H_t-3, newest first"""
    frames: Tuple[np.ndarray, ...] = ()

    def push(self, frame: np.ndarray) -> "ObsHistory":
        if not self.frames:
            return ObsHistory((frame,) * HISTORY)
        return ObsHistory((frame,) + self.frames[:HISTORY - 1])

    def vector(self) -> np.ndarray:
        return np.concatenate(self.frames)


def build_obs(olist: ObstacleList, subgoal_polar: Sequence[float], v: float, omega: float,
              hist: Optional[ObsHistory], robot_cfg: Optional[RobotConfig] = None) -> Tuple[np.ndarray, ObsHistory]:
    """
    Encode the current frame, push it into the history and return the network input

    Returns:
        (4 * 76,) input vector and the updated history
    """
    hist = (hist or ObsHistory()).push(frame_vector(olist, subgoal_polar, v, omega, robot_cfg))
    return hist.vector(), hist


class HistoryEncoder(nn.Module):
    """Shared frame FC applied to each history slot, slots concatenated"""

    def __init__(self, hidden: int = 128):
        super().__init__()
        self.hidden = hidden
        self.frame_fc = Affine(FRAME_WIDTH, hidden)

    @property
    def out_features(self) -> int:
        return HISTORY * self.hidden

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b = x.shape[0]
        h = relu(self.frame_fc(x.reshape(b * HISTORY, FRAME_WIDTH)))
        return h.reshape(b, HISTORY * self.hidden)


class _Trunk(nn.Module):
    def __init__(self, cfg: LowNetConfig, out_features: int):
        super().__init__()
        self.encoder = HistoryEncoder(cfg.frame_hidden)
        sizes = [self.encoder.out_features] + list(cfg.trunk)
        self.hidden = nn.ModuleList([Affine(a, b) for a, b in zip(sizes[:-1], sizes[1:])])
        self.head = Affine(sizes[-1], out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.encoder(x)
        for layer in self.hidden:
            h = relu(layer(h))
        return self.head(h)


class GaussianActor(nn.Module):
    """Pre-squash Gaussian over (v, omega) with a state-independent log-std"""

    def __init__(self, cfg: Optional[LowNetConfig] = None, robot_cfg: Optional[RobotConfig] = None):
        super().__init__()
        cfg = cfg or LowNetConfig()
        self.robot_cfg = robot_cfg or RobotConfig()
        self.mean_net = _Trunk(cfg, 2)
        self.log_std = nn.Parameter(torch.full((2,), float(cfg.init_log_std)))

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.mean_net.encoder(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.mean_net(x)

    def distribution(self, x: torch.Tensor) -> Independent:
        mean = self.mean_net(x)
        return Independent(Normal(mean, self.log_std.exp().expand_as(mean)), 1)

    def squash(self, u: torch.Tensor) -> torch.Tensor:
        v = self.robot_cfg.v_max * (torch.tanh(u[..., 0]) + 1.0) / 2.0
        w = self.robot_cfg.omega_max * torch.tanh(u[..., 1])
        return torch.stack([v, w], dim=-1)


class Critic(nn.Module):
    """State value over the same history input; used for both reward and cost"""

    def __init__(self, cfg: Optional[LowNetConfig] = None):
        super().__init__()
        self.net = _Trunk(cfg or LowNetConfig(), 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).squeeze(-1)


def build_low_networks(seed: int, cfg: Optional[LowNetConfig] = None, robot_cfg: Optional[RobotConfig] = None,
                       dtype: str = "float32") -> Tuple[GaussianActor, Critic, Critic]:
    cfg = cfg or LowNetConfig()
    gen = seeded_generator(seed)
    nets = (GaussianActor(cfg, robot_cfg), Critic(cfg), Critic(cfg))
    for net in nets:
        fan_in_uniform_(net.to(resolve_dtype(dtype)), gen)
    return nets


@dataclass(frozen=True)
class LowAction:
    v: float
    omega: float
    u: Tuple[float, float]  # pre-squash sample
    log_prob: float


def act(net: GaussianActor, obs: np.ndarray, stochastic: bool,
        rng: Optional[np.random.Generator] = None) -> LowAction:
    """
    Command from the actor

    Stochastic mode samples the pre-squash Gaussian with noise drawn from rng;
    deterministic mode returns the squashed mean. The log-prob is of the
    pre-squash sample.
    """
    dtype = net.log_std.dtype
    x = torch.as_tensor(np.asarray(obs)[None, :], dtype=dtype)
    with torch.no_grad():
        mean = net(x)[0]
        std = net.log_std.exp()
        if stochastic:
            if rng is None:
                raise ValueError("stochastic act needs an rng")
            u = mean + std * torch.as_tensor(rng.standard_normal(2), dtype=dtype)
        else:
            u = mean
        log_prob = Independent(Normal(mean, std), 1).log_prob(u)
        cmd = net.squash(u)
    return LowAction(float(cmd[0]), float(cmd[1]), (float(u[0]), float(u[1])), float(log_prob))


@dataclass
class RolloutBatch:
    """Per-step rollout data; cost is the contact indicator"""
    obs: List[np.ndarray] = field(default_factory=list)
    actions: List[Tuple[float, float]] = field(default_factory=list)
    log_probs: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    costs: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    cost_values: List[float] = field(default_factory=list)
    dones: List[bool] = field(default_factory=list)
    last_value: float = 0.0
    last_cost_value: float = 0.0

    def __len__(self) -> int:
        return len(self.rewards)

    def add(self, obs, action, log_prob, reward, cost, value, cost_value, done) -> None:
        if cost not in (0, 1, 0.0, 1.0):
            raise ValueError("cost must be 0 or 1")
        self.obs.append(obs)
        self.actions.append(tuple(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.costs.append(float(cost))
        self.values.append(float(value))
        self.cost_values.append(float(cost_value))
        self.dones.append(bool(done))


def _gae_stream(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, last_value: float,
                gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        next_value = last_value if t == n - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        adv[t] = last = delta + gamma * lam * nonterminal * last
    return adv, adv + values


def gae(rollout: RolloutBatch, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation on the reward and cost streams independently

    Returns:
        (advantages, cost advantages, returns, cost returns)
    """
    if len(rollout) == 0:
        raise ValueError("gae needs a non-empty rollout")
    dones = np.asarray(rollout.dones, dtype=float)
    adv, ret = _gae_stream(np.asarray(rollout.rewards), np.asarray(rollout.values), dones,
                           rollout.last_value, gamma, lam)
    cadv, cret = _gae_stream(np.asarray(rollout.costs), np.asarray(rollout.cost_values), dones,
                             rollout.last_cost_value, gamma, lam)
    return adv, cadv, ret, cret


@dataclass(frozen=True)
class PedTrack:
    """Pedestrian observed in the robot frame at the current instant"""
    x: float
    y: float
    vx: float
    vy: float
    radius: float = 0.25


def _unicycle_positions(v: float, omega: float, times: np.ndarray) -> np.ndarray:
    """Robot-frame positions along the exact arc from the origin, heading +x"""
    if abs(omega) < 1e-12:
        return np.stack([v * times, np.zeros_like(times)], axis=1)
    r = v / omega
    th = omega * times
    return np.stack([r * np.sin(th), r * (1.0 - np.cos(th))], axis=1)


def _clearance(points: np.ndarray, obstacles: np.ndarray, peds: Sequence[PedTrack], times: np.ndarray,
               robot_radius: float) -> float:
    d = np.inf
    if len(obstacles):
        d = min(d, float(np.linalg.norm(points[:, None, :] - obstacles[None, :, :], axis=-1).min()))
    for p in peds:
        px = p.x + p.vx * times
        py = p.y + p.vy * times
        d = min(d, float((np.hypot(points[:, 0] - px, points[:, 1] - py) - p.radius).min()))
    return d - robot_radius


def safety_filter(cmd: Sequence[float], olist: ObstacleList, peds: Sequence[PedTrack] = (),
                  horizon: Optional[float] = None, cfg: Optional[SafetyConfig] = None,
                  robot_cfg: Optional[RobotConfig] = None) -> Tuple[float, float]:
    """
    Scale down the linear speed of a command whose short-horizon rollout gets too close

    The command is forward-simulated for `horizon` seconds against the
    obstacle points and constant-velocity pedestrian tracks. It is safe when
    the predicted clearance stays at or above min(margin, current clearance).
    Unsafe commands keep omega and get the largest bisected speed scale that
    is safe. Zero translation is always safe and safe commands pass through
    unchanged.
    """
    cfg = cfg or SafetyConfig()
    robot_cfg = robot_cfg or RobotConfig()
    horizon = cfg.horizon if horizon is None else horizon
    v, omega = float(cmd[0]), float(cmd[1])
    if v == 0.0:
        return v, omega

    obstacles = olist.points()
    n_checks = max(int(round(horizon / cfg.check_dt)), 1)
    times = np.arange(1, n_checks + 1) * (horizon / n_checks)
    now = _clearance(np.zeros((1, 2)), obstacles, peds, np.zeros(1), robot_cfg.radius)
    required = min(cfg.margin, now)

    def is_safe(speed: float) -> bool:
        return _clearance(_unicycle_positions(speed, omega, times), obstacles, peds, times,
                          robot_cfg.radius) >= required

    if is_safe(v):
        return v, omega
    lo, hi = 0.0, 1.0
    for _ in range(cfg.bisect_iters):
        mid = 0.5 * (lo + hi)
        if is_safe(v * mid):
            lo = mid
        else:
            hi = mid
    logger.debug(f"Safety filter scaled v {v:.3f} -> {v * lo:.3f}")
    return v * lo, omega
