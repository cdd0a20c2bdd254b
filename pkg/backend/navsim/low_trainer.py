"""
Training loop for the low-level motion policy on randomized arenas
"""
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from .autodiff import ParamSet, load_checkpoint, module_tensors, resolve_dtype, restore_module, save_checkpoint
from .config import RunConfig, config_hash
from .cpo import cpo_update, prepare_batch
from .errors import CheckpointError
from .low_policy import GaussianActor, ObsHistory, RolloutBatch, act, build_low_networks, build_obs
from .perception import encode_obstacles, minpool
from .reward import guidance_distance_fn, low_reward
from .scenario import PedestrianSpec, ScenarioSpec
from .simulation import Simulation
from .utils import episode_rng, read_curves, write_curves
from .world import WorldModel

logger = logging.getLogger(__name__)

PREFIXES = ("actor/", "critic/", "cost_critic/")


def _free_point(world: WorldModel, rng: np.random.Generator, margin: float, clearance: float,
                tries: int = 100) -> Tuple[float, float]:
    x0, y0, x1, y1 = world.bounds
    p = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    for _ in range(tries):
        p = (float(rng.uniform(x0 + margin, x1 - margin)), float(rng.uniform(y0 + margin, y1 - margin)))
        if world.clearance(np.array([p]))[0] >= clearance:
            return p
    return p


def random_arena(cfg: RunConfig, rng: np.random.Generator, name: str = "arena") -> ScenarioSpec:
    """
    Square arena with random round obstacles and pedestrians

    The robot start keeps at least 0.5 m from every obstacle.
    """
    tl = cfg.train_low
    size = tl.arena_size
    circles = []
    for _ in range(int(rng.integers(0, tl.max_obstacles + 1))):
        r = float(rng.uniform(0.2, 0.6))
        circles.append((float(rng.uniform(1.0, size - 1.0)), float(rng.uniform(1.0, size - 1.0)), r))
    world = WorldModel(bounds=(0.0, 0.0, size, size), circles=circles)
    peds = []
    for _ in range(int(rng.integers(0, tl.max_pedestrians + 1))):
        peds.append(PedestrianSpec(start=_free_point(world, rng, 0.5, 0.4), goal=_free_point(world, rng, 0.5, 0.4),
                                   v0=float(rng.uniform(0.3, 1.0))))
    sx, sy = _free_point(world, rng, 1.0, 0.5)
    start = (sx, sy, float(rng.uniform(-math.pi, math.pi)))
    return ScenarioSpec(name=name, world=world, robot_start=start, goal=(sx, sy), pedestrians=peds,
                        horizon_steps=tl.episode_steps, dt=cfg.sim.dt)


def random_subgoal(world: WorldModel, pose, cfg: RunConfig, rng: np.random.Generator,
                   tries: int = 50) -> Tuple[float, float]:
    tl = cfg.train_low
    d_hi = min(tl.subgoal_max, cfg.lidar.range_max)
    point = (pose[0], pose[1])
    for _ in range(tries):
        d = float(rng.uniform(tl.subgoal_min, d_hi))
        a = pose[2] + float(rng.uniform(-math.pi, math.pi))
        point = (pose[0] + d * math.cos(a), pose[1] + d * math.sin(a))
        if world.contains(*point) and world.clearance(np.array([point]))[0] >= cfg.robot.radius + 0.1:
            return point
    return point


class LowLevelTrainer:
    """Rollout collection on fresh arenas followed by one CPO update per batch"""

    def __init__(self, cfg: RunConfig, output_dir: Path, checkpoint_path: Optional[Path] = None):
        self.cfg = cfg
        self.output_dir = Path(output_dir)
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else self.output_dir / "low.ckpt"
        self.curves_path = self.output_dir / "low_curves.csv"
        self.actor, self.critic, self.cost_critic = build_low_networks(cfg.seed, cfg.low_net, cfg.robot, cfg.dtype)
        self.critic_params = ParamSet.from_module(self.critic, lr=cfg.cpo.value_lr)
        self.cost_params = ParamSet.from_module(self.cost_critic, lr=cfg.cpo.value_lr)
        self.dtype = resolve_dtype(cfg.dtype)
        self.update = 0
        self.episodes = 0
        self.total_steps = 0
        self.curves: List[Dict] = []
        self.hash = config_hash(cfg)

    # -- checkpoints ---------------------------------------------------------

    def save(self) -> Path:
        tensors = {}
        for prefix, module, params in zip(PREFIXES, (self.actor, self.critic, self.cost_critic),
                                          (None, self.critic_params, self.cost_params)):
            tensors.update({prefix + k: v for k, v in module_tensors(module, params).items()})
        meta = {
            "level": "low",
            "update": self.update,
            "episodes": self.episodes,
            "total_steps": self.total_steps,
            "critic_adam_step": self.critic_params.step_count,
            "cost_critic_adam_step": self.cost_params.step_count,
            "frame_hidden": self.cfg.low_net.frame_hidden,
            "trunk": list(self.cfg.low_net.trunk),
            "config_hash": self.hash,
        }
        save_checkpoint(self.checkpoint_path, tensors, meta)
        write_curves(self.curves_path, self.curves)
        return self.checkpoint_path

    def resume(self) -> None:
        tensors, meta = load_checkpoint(self.checkpoint_path)
        if meta.get("level") != "low":
            raise CheckpointError(f"{self.checkpoint_path} is not a low-level checkpoint")
        parts = {p: {k[len(p):]: v for k, v in tensors.items() if k.startswith(p)} for p in PREFIXES}
        restore_module(self.actor, parts["actor/"])
        restore_module(self.critic, parts["critic/"], self.critic_params, meta.get("critic_adam_step", 0))
        restore_module(self.cost_critic, parts["cost_critic/"], self.cost_params, meta.get("cost_critic_adam_step", 0))
        self.update = int(meta["update"])
        self.episodes = int(meta["episodes"])
        self.total_steps = int(meta["total_steps"])
        self.curves = [r for r in read_curves(self.curves_path) if r["update"] < self.update]
        logger.info(f"Resumed low-level training at update {self.update}")

    # -- rollouts ------------------------------------------------------------

    def _values(self, obs: np.ndarray) -> Tuple[float, float]:
        x = torch.as_tensor(obs[None, :], dtype=self.dtype)
        with torch.no_grad():
            return float(self.critic(x)[0]), float(self.cost_critic(x)[0])

    def collect(self) -> Tuple[RolloutBatch, Dict]:
        """Gather at least batch_steps control steps of whole or truncated episodes"""
        cfg = self.cfg
        batch = RolloutBatch()
        returns, contacts, arrivals = [], [], 0
        while len(batch) < cfg.train_low.batch_steps:
            rng = episode_rng(cfg.seed, self.episodes)
            arena = random_arena(cfg, rng, f"arena_{self.episodes}")
            sim = Simulation(arena, cfg, rng)
            distance = guidance_distance_fn(cfg.reward.low_guidance, arena.world, cfg.oracle)
            target = random_subgoal(arena.world, sim.robot.pose, cfg, rng)
            hist: Optional[ObsHistory] = None
            ep_return, ep_cost = 0.0, 0.0
            for t in range(arena.horizon_steps):
                s = sim.scan()
                olist = encode_obstacles(minpool(s), cfg.congestion.d_s)
                obs, hist = build_obs(olist, sim.polar_to(target), sim.robot.v, sim.robot.omega, hist, cfg.robot)
                action = act(self.actor, obs, stochastic=True, rng=rng)
                value, cost_value = self._values(obs)
                d_prev = distance(sim.robot.position, target)
                report = sim.step((action.v, action.omega))
                d_t = math.hypot(target[0] - sim.robot.x, target[1] - sim.robot.y)
                reward = low_reward(d_t, d_prev, distance(sim.robot.position, target), cfg.reward)
                cost = 1.0 if report.in_contact else 0.0
                done = d_t < cfg.reward.d_limit or t == arena.horizon_steps - 1
                batch.add(obs, action.u, action.log_prob, reward, cost, value, cost_value, done)
                ep_return += reward
                ep_cost += cost
                if done:
                    arrivals += int(d_t < cfg.reward.d_limit)
                    break
                if len(batch) >= cfg.train_low.batch_steps:
                    s = sim.scan()
                    olist = encode_obstacles(minpool(s), cfg.congestion.d_s)
                    last_obs, _ = build_obs(olist, sim.polar_to(target), sim.robot.v, sim.robot.omega, hist, cfg.robot)
                    batch.last_value, batch.last_cost_value = self._values(last_obs)
                    break
            self.episodes += 1
            returns.append(ep_return)
            contacts.append(ep_cost)
        self.total_steps += len(batch)
        return batch, {
            "episodes": len(returns),
            "mean_return": float(np.mean(returns)),
            "mean_episode_cost": float(np.mean(contacts)),
            "arrival_rate": arrivals / len(returns),
        }

    def train(self, updates: Optional[int] = None) -> List[Dict]:
        total = updates if updates is not None else self.cfg.train_low.updates
        if self.cfg.resume and self.checkpoint_path.exists():
            self.resume()
        if self.cfg.train_low.batch_steps < self.cfg.cpo.min_batch:
            logger.warning(f"batch_steps {self.cfg.train_low.batch_steps} is below cpo.min_batch "
                           f"{self.cfg.cpo.min_batch}; KL estimates will be noisy")
        logger.info(f"Low-level training: updates {self.update}..{total - 1}")
        while self.update < total:
            rollout, stats = self.collect()
            batch = prepare_batch(rollout, self.cfg.cpo, self.dtype)
            diag = cpo_update(self.actor, batch, self.cfg.cpo, self.critic, self.critic_params,
                              self.cost_critic, self.cost_params)
            row = {
                "update": self.update,
                "total_steps": self.total_steps,
                **stats,
                "surrogate_improvement": diag.surrogate_improvement,
                "kl": diag.kl,
                "mean_cost": diag.mean_cost,
                "constraint_slack": diag.constraint_slack,
                "recovery": int(diag.recovery),
                "accepted": int(diag.accepted),
                "optim_case": diag.optim_case,
                "value_loss": diag.value_loss,
                "cost_value_loss": diag.cost_value_loss,
            }
            self.curves.append(row)
            self.update += 1
            logger.info(f"Update {self.update}: return {stats['mean_return']:.2f}, cost {diag.mean_cost:.4f}, "
                        f"kl {diag.kl:.5f}, case {diag.optim_case}")
            if self.update % self.cfg.train_low.checkpoint_every == 0:
                self.save()
        self.save()
        return self.curves


def load_low_actor(path: Path, cfg: RunConfig) -> GaussianActor:
    """Actor weights from a low-level checkpoint"""
    tensors, meta = load_checkpoint(path)
    if meta.get("level") != "low":
        raise CheckpointError(f"{path} is not a low-level checkpoint")
    net_cfg = cfg.low_net.model_copy(update={"frame_hidden": meta.get("frame_hidden", cfg.low_net.frame_hidden),
                                             "trunk": meta.get("trunk", cfg.low_net.trunk)})
    actor = GaussianActor(net_cfg, cfg.robot).to(resolve_dtype(cfg.dtype))
    restore_module(actor, {k[len("actor/"):]: v for k, v in tensors.items() if k.startswith("actor/")})
    return actor
