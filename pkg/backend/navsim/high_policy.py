"""
High-level sub-goal policy: dueling Q-network over the LOMap stack and the
goal's polar coordinates, masked epsilon-greedy selection, double-DQN
targets, hindsight relabeling and the replay buffer.
"""
import logging
import math
import threading
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .autodiff import (Affine, Conv2d, ParamSet, adam_step, check_finite, dueling_aggregate,
                       fan_in_uniform_, relu, resolve_dtype, seeded_generator)
from .config import DqnConfig, RewardConfig
from .errors import TrainingDivergedError
from .geometry import relative_polar
from .perception import LOMapStack, STACK_DEPTH
from .reward import DistanceFn, euclidean, high_reward

logger = logging.getLogger(__name__)

N_ACTIONS = 225

Point = Tuple[float, float]
Pose = Tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class HighObs:
    lomap_stack: LOMapStack
    goal_polar: Tuple[float, float]


@dataclass(frozen=True, eq=False)
class HighTransition:
    obs: HighObs
    action: int
    reward: float
    next_obs: HighObs
    done: bool
    achieved_world: Point
    goal_world: Point
    start_pose: Pose
    end_pose: Pose
    next_mask: Optional[np.ndarray] = None
    invalid_subgoal: bool = False


class QNetwork(nn.Module):
    """
    Conv stack over the 4-channel LOMap, FC over the goal, dueling heads

    Args:
        lomap_size: Side length of each LOMap in cells
        n_actions: Number of sub-goal sectors
    """

    def __init__(self, lomap_size: int = 60, n_actions: int = N_ACTIONS):
        super().__init__()
        self.n_actions = n_actions
        self.conv1 = Conv2d(STACK_DEPTH, 16, 5, stride=2)
        self.conv2 = Conv2d(16, 32, 3, stride=2)
        self.conv3 = Conv2d(32, 32, 3, stride=2)
        side = self.conv3.output_size(self.conv2.output_size(self.conv1.output_size(lomap_size)))
        self.map_fc = Affine(32 * side * side, 256)
        self.goal_fc = Affine(2, 64)
        self.joint_fc = Affine(256 + 64, 256)
        self.value = Affine(256, 1)
        self.advantage = Affine(256, n_actions)

    def forward(self, maps: torch.Tensor, goals: torch.Tensor) -> torch.Tensor:
        h = relu(self.conv1(maps))
        h = relu(self.conv2(h))
        h = relu(self.conv3(h))
        h = relu(self.map_fc(h.reshape(h.shape[0], -1)))
        g = relu(self.goal_fc(goals))
        z = relu(self.joint_fc(torch.cat([h, g], dim=1)))
        return dueling_aggregate(self.value(z), self.advantage(z))


def build_q_network(seed: int, lomap_size: int = 60, dtype: str = "float32",
                    n_actions: int = N_ACTIONS) -> QNetwork:
    net = QNetwork(lomap_size, n_actions).to(resolve_dtype(dtype))
    fan_in_uniform_(net, seeded_generator(seed))
    return net


def goal_features(goal_polar: Sequence[float], goal_scale: float) -> np.ndarray:
    return np.array([goal_polar[0] / goal_scale, goal_polar[1] / math.pi])


def _dtype_of(net: nn.Module) -> torch.dtype:
    return next(net.parameters()).dtype


def obs_tensors(observations: Sequence[HighObs], goal_scale: float,
                dtype: torch.dtype) -> Tuple[torch.Tensor, torch.Tensor]:
    maps = np.stack([o.lomap_stack.to_array() for o in observations])
    goals = np.stack([goal_features(o.goal_polar, goal_scale) for o in observations])
    return torch.as_tensor(maps, dtype=dtype), torch.as_tensor(goals, dtype=dtype)


def q_values(net: QNetwork, obs: HighObs, goal_scale: float = 10.0) -> np.ndarray:
    """Q-value per sector for one observation"""
    maps, goals = obs_tensors([obs], goal_scale, _dtype_of(net))
    with torch.no_grad():
        return net(maps, goals)[0].double().numpy()


def select_action(q: np.ndarray, mask: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """
    Masked epsilon-greedy selection

    With probability epsilon an allowed index is drawn uniformly, otherwise
    the highest-valued allowed index; ties resolve to the lowest index.
    """
    allowed = np.flatnonzero(mask)
    if len(allowed) == 0:
        raise ValueError("select_action needs at least one allowed action")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.choice(allowed))
    masked = np.where(mask, q, -np.inf)
    return int(np.argmax(masked))


@dataclass(eq=False)
class HighBatch:
    maps: torch.Tensor
    goals: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    next_maps: torch.Tensor
    next_goals: torch.Tensor
    dones: torch.Tensor
    next_masks: torch.Tensor

    def __len__(self) -> int:
        return self.actions.shape[0]


def collate(transitions: Sequence[HighTransition], goal_scale: float, dtype: torch.dtype,
            n_actions: int = N_ACTIONS) -> HighBatch:
    maps, goals = obs_tensors([t.obs for t in transitions], goal_scale, dtype)
    next_maps, next_goals = obs_tensors([t.next_obs for t in transitions], goal_scale, dtype)
    masks = np.stack([t.next_mask if t.next_mask is not None else np.ones(n_actions, dtype=bool)
                      for t in transitions])
    return HighBatch(
        maps=maps,
        goals=goals,
        actions=torch.as_tensor([t.action for t in transitions], dtype=torch.long),
        rewards=torch.as_tensor([t.reward for t in transitions], dtype=dtype),
        next_maps=next_maps,
        next_goals=next_goals,
        dones=torch.as_tensor([float(t.done) for t in transitions], dtype=dtype),
        next_masks=torch.as_tensor(masks, dtype=torch.bool),
    )


QFunction = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def dqn_target(batch: HighBatch, gamma: float, online_net: QFunction, target_net: QFunction) -> torch.Tensor:
    """
    Double-DQN targets: the online net picks the next action among unmasked
    sectors, the target net evaluates it. Done transitions bootstrap nothing.
    """
    if len(batch) == 0:
        raise ValueError("dqn_target needs a non-empty batch")
    with torch.no_grad():
        q_online = online_net(batch.next_maps, batch.next_goals)
        q_online = q_online.masked_fill(~batch.next_masks, -math.inf)
        best = q_online.argmax(dim=1, keepdim=True)
        q_next = target_net(batch.next_maps, batch.next_goals).gather(1, best).squeeze(1)
        return batch.rewards + gamma * (1.0 - batch.dones) * q_next


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling; one writer, snapshot reads"""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: List[HighTransition] = []
        self._next = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: HighTransition) -> None:
        with self._lock:
            if len(self._items) < self.capacity:
                self._items.append(transition)
            else:
                self._items[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def extend(self, transitions: Sequence[HighTransition]) -> None:
        for t in transitions:
            self.add(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[HighTransition]:
        with self._lock:
            snapshot = list(self._items)
        if len(snapshot) < batch_size:
            raise ValueError(f"buffer holds {len(snapshot)} transitions, need {batch_size}")
        idx = rng.choice(len(snapshot), size=batch_size, replace=False)
        return [snapshot[i] for i in idx]


def her_relabel(episode: Sequence[HighTransition], k: int, rng: np.random.Generator,
                reward_cfg: Optional[RewardConfig] = None,
                distance_fn: DistanceFn = euclidean) -> List[HighTransition]:
    """
    Hindsight relabeling with the "future" strategy

    For each transition up to k achieved points from the same or later
    segments become substitute goals. Goal polar coordinates, reward and done
    are recomputed against the substitute goal.

    Args:
        episode: Transitions of one episode in order
        k: Substitute goals per transition
        rng: Sampling source
        reward_cfg: Reward constants
        distance_fn: Guidance distance (A* in training), None when unreachable

    Returns:
        The extra relabeled transitions
    """
    reward_cfg = reward_cfg or RewardConfig()
    if k <= 0 or not episode:
        return []
    out = []
    n = len(episode)
    for t, tr in enumerate(episode):
        future = np.arange(t, n)
        picks = rng.choice(future, size=min(k, len(future)), replace=False)
        for j in np.sort(picks):
            out.append(relabel_transition(tr, episode[int(j)].achieved_world, reward_cfg, distance_fn))
    return out


def relabel_transition(tr: HighTransition, goal: Point, reward_cfg: RewardConfig,
                       distance_fn: DistanceFn) -> HighTransition:
    goal = (float(goal[0]), float(goal[1]))
    d_t = euclidean(tr.end_pose[:2], goal)
    reward = high_reward(d_t, distance_fn(tr.start_pose[:2], goal), distance_fn(tr.end_pose[:2], goal),
                         tr.invalid_subgoal, reward_cfg)
    return replace(
        tr,
        obs=replace(tr.obs, goal_polar=relative_polar(tr.start_pose, goal)),
        next_obs=replace(tr.next_obs, goal_polar=relative_polar(tr.end_pose, goal)),
        reward=reward,
        done=d_t < reward_cfg.d_limit,
        goal_world=goal,
    )


def epsilon_at(step: int, cfg: DqnConfig) -> float:
    """Linear decay from eps_start to eps_end over eps_decay_steps high-level steps"""
    frac = min(max(step, 0) / cfg.eps_decay_steps, 1.0)
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


class DqnLearner:
    """Online / target networks plus optimizer state for the high-level policy"""

    def __init__(self, cfg: DqnConfig, seed: int, lomap_size: int = 60, dtype: str = "float32",
                 n_actions: int = N_ACTIONS):
        self.cfg = cfg
        self.online = build_q_network(seed, lomap_size, dtype, n_actions)
        self.target = build_q_network(seed, lomap_size, dtype, n_actions)
        self.target.load_state_dict(self.online.state_dict())
        self.params = ParamSet.from_module(self.online, lr=cfg.lr)
        self.updates = 0

    @property
    def dtype(self) -> torch.dtype:
        return _dtype_of(self.online)

    def sync_target(self) -> None:
        self.target.load_state_dict(self.online.state_dict())

    def train_on_batch(self, transitions: Sequence[HighTransition]) -> float:
        batch = collate(transitions, self.cfg.goal_scale, self.dtype, self.online.n_actions)
        y = dqn_target(batch, self.cfg.gamma, self.online, self.target)
        q = self.online(batch.maps, batch.goals).gather(1, batch.actions[:, None]).squeeze(1)
        loss = F.smooth_l1_loss(q, y)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"non-finite DQN loss at update {self.updates}",
                                        {"update": self.updates, "loss": float(loss)})
        self.params.optimizer.zero_grad()
        loss.backward()
        for name, p in self.params.params.items():
            check_finite(name, p.grad)
        torch.nn.utils.clip_grad_norm_(self.online.parameters(), self.cfg.grad_clip)
        adam_step(self.params, lr=self.cfg.lr)
        self.updates += 1
        if self.updates % self.cfg.target_sync == 0:
            self.sync_target()
            logger.debug(f"Target network synced at update {self.updates}")
        return float(loss)

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> float:
        """Sample a uniform batch and apply one smooth-L1 update toward the double-DQN target"""
        return self.train_on_batch(buffer.sample(self.cfg.batch_size, rng))


class GreedyHighPolicy:
    """Runtime sub-goal selection: masked argmax, no exploration"""

    def __init__(self, net: QNetwork, goal_scale: float = 10.0):
        self.net = net.eval()
        self.goal_scale = goal_scale

    def select(self, obs: HighObs, mask: np.ndarray) -> int:
        q = q_values(self.net, obs, self.goal_scale)
        return select_action(q, mask, 0.0, None)
