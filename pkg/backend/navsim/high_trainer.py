"""
Training loop for the high-level sub-goal policy

The low level is the scripted pursuit controller, so the high level learns
against a fixed, predictable executor.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .autodiff import load_checkpoint, module_tensors, resolve_dtype, restore_module, save_checkpoint
from .config import RunConfig, config_hash
from .congestion import SectorGrid, action_mask, congestion, sector_to_polar, update_threshold
from .controllers import PursuitController
from .errors import CheckpointError
from .high_policy import (N_ACTIONS, DqnLearner, HighObs, HighTransition, QNetwork, ReplayBuffer, epsilon_at,
                          her_relabel, q_values, select_action)
from .perception import LOMapStack, build_lomap, encode_obstacles, minpool, stack_frames
from .reward import DistanceFn, guidance_distance_fn, high_reward
from .runner import ScenarioOracle, prepare_episode
from .scenario import ScenarioSpec
from .simulation import Simulation
from .utils import episode_rng, read_curves, write_curves
from .validators import point_in_obstacle

logger = logging.getLogger(__name__)

TARGET_PREFIX = "target/"


class HighLevelTrainer:
    """Episodes of masked epsilon-greedy sub-goal selection with HER and double-DQN updates"""

    def __init__(self, cfg: RunConfig, scenarios: Sequence[ScenarioSpec], output_dir: Path,
                 checkpoint_path: Optional[Path] = None):
        if not scenarios:
            raise ValueError("high-level training needs at least one scenario")
        self.cfg = cfg
        self.scenarios = list(scenarios)
        self.output_dir = Path(output_dir)
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else self.output_dir / "high.ckpt"
        self.curves_path = self.output_dir / "high_curves.csv"
        self.grid = SectorGrid.from_config(cfg.congestion, cfg.lidar)
        self.learner = DqnLearner(cfg.dqn, cfg.seed, cfg.lomap.size, cfg.dtype, self.grid.size)
        self.buffer = ReplayBuffer(cfg.dqn.buffer_size)
        self.controller = PursuitController(cfg.robot)
        self.oracles = [ScenarioOracle(s, cfg) for s in self.scenarios]
        self.distance_fns: List[DistanceFn] = [
            guidance_distance_fn(cfg.reward.guidance, s.world, cfg.oracle) for s in self.scenarios
        ]
        self.episode = 0
        self.high_steps = 0
        self.curves: List[Dict] = []
        self.hash = config_hash(cfg)

    # -- checkpoints ---------------------------------------------------------

    def save(self) -> Path:
        tensors = module_tensors(self.learner.online, self.learner.params)
        for name, t in self.learner.target.named_parameters():
            tensors[TARGET_PREFIX + name] = t.detach()
        meta = {
            "level": "high",
            "episode": self.episode,
            "high_steps": self.high_steps,
            "updates": self.learner.updates,
            "adam_step": self.learner.params.step_count,
            "config_hash": self.hash,
            "lomap_size": self.cfg.lomap.size,
            "n_actions": self.grid.size,
        }
        save_checkpoint(self.checkpoint_path, tensors, meta)
        write_curves(self.curves_path, self.curves)
        return self.checkpoint_path

    def resume(self) -> None:
        tensors, meta = load_checkpoint(self.checkpoint_path)
        if meta.get("level") != "high":
            raise CheckpointError(f"{self.checkpoint_path} is not a high-level checkpoint")
        restore_module(self.learner.online, tensors, self.learner.params, meta.get("adam_step", 0))
        restore_module(self.learner.target, {k[len(TARGET_PREFIX):]: v for k, v in tensors.items()
                                             if k.startswith(TARGET_PREFIX)})
        self.episode = int(meta["episode"])
        self.high_steps = int(meta["high_steps"])
        self.learner.updates = int(meta["updates"])
        self.curves = [r for r in read_curves(self.curves_path) if r["episode"] < self.episode]
        logger.info(f"Resumed high-level training at episode {self.episode} ({self.high_steps} high steps)")

    # -- episodes ------------------------------------------------------------

    def _observe(self, sim: Simulation, stack: Optional[LOMapStack]):
        s = sim.scan()
        lomap = build_lomap(s, self.cfg.lomap)
        stack = stack_frames(stack, lomap)
        mask = action_mask(lomap, self.grid, self.cfg.congestion.mask_clearance)
        return s, HighObs(stack, sim.goal_polar()), stack, mask

    def _run_segment(self, sim: Simulation, target, steps_left: int, d_u: float) -> int:
        """Pursue the sub-goal until within d_u, the segment budget, arrival or the timeout"""
        cc = self.cfg.congestion
        t0 = sim.time
        n = 0
        while n < min(self.cfg.dqn.segment_max_steps, steps_left):
            if sim.distance_to_goal() < self.cfg.reward.d_limit or sim.time - t0 >= cc.timeout_s:
                break
            d, theta = sim.polar_to(target)
            if d < d_u:
                break
            s = sim.scan()
            olist = encode_obstacles(minpool(s), cc.d_s)
            sim.step(self.controller.command(olist, (d, theta), sim.robot.v, sim.robot.omega))
            n += 1
            d_u = update_threshold(congestion(s, cc.d_s), cc.alpha, cc.beta, cc.d_u_min, cc.d_u_max)
        return n

    def run_episode(self, index: int) -> Dict:
        cfg = self.cfg
        k = index % len(self.scenarios)
        spec, distance = self.scenarios[k], self.distance_fns[k]
        rng = episode_rng(cfg.seed, index)
        setup = prepare_episode(spec, cfg, rng, self.oracles[k])
        sim = Simulation(spec, cfg, rng, setup.start, setup.goal)
        cc = cfg.congestion

        s, obs, stack, mask = self._observe(sim, None)
        transitions: List[HighTransition] = []
        ep_return, losses = 0.0, []
        control_steps = 0
        done = False
        for _ in range(cfg.dqn.max_high_steps):
            if control_steps >= spec.horizon_steps:
                break
            eps = epsilon_at(self.high_steps, cfg.dqn)
            q = q_values(self.learner.online, obs, cfg.dqn.goal_scale)
            action = select_action(q, mask, eps, rng)
            start_pose = sim.robot.pose
            sub = sector_to_polar(action, self.grid).anchored(start_pose)
            wx, wy = sub.world_point
            invalid = not spec.world.contains(wx, wy) or point_in_obstacle(spec.world, wx, wy)

            d_prev = distance(start_pose[:2], sim.goal)
            d_u = update_threshold(congestion(s, cc.d_s), cc.alpha, cc.beta, cc.d_u_min, cc.d_u_max)
            control_steps += self._run_segment(sim, sub.world_point, spec.horizon_steps - control_steps, d_u)
            end_pose = sim.robot.pose
            d_t = sim.distance_to_goal()
            reward = high_reward(d_t, d_prev, distance(end_pose[:2], sim.goal), invalid, cfg.reward)
            done = d_t < cfg.reward.d_limit

            s, next_obs, stack, mask = self._observe(sim, stack)
            transitions.append(HighTransition(obs, action, reward, next_obs, done, (end_pose[0], end_pose[1]),
                                              tuple(sim.goal), start_pose, end_pose, mask, invalid))
            self.buffer.add(transitions[-1])
            ep_return += reward
            self.high_steps += 1
            obs = next_obs

            if len(self.buffer) >= max(cfg.dqn.warmup, cfg.dqn.batch_size):
                losses.append(self.learner.train_step(self.buffer, rng))
            if done:
                break

        self.buffer.extend(her_relabel(transitions, cfg.dqn.her_k, rng, cfg.reward, distance))
        return {
            "episode": index,
            "scenario": spec.name,
            "high_steps": len(transitions),
            "control_steps": control_steps,
            "return": ep_return,
            "success": int(done),
            "epsilon": epsilon_at(self.high_steps, cfg.dqn),
            "loss": float(np.mean(losses)) if losses else float("nan"),
            "total_high_steps": self.high_steps,
        }

    def train(self, episodes: Optional[int] = None) -> List[Dict]:
        """Run until `episodes` (default dqn.episodes) have been completed in total"""
        total = episodes if episodes is not None else self.cfg.dqn.episodes
        if self.cfg.resume and self.checkpoint_path.exists():
            self.resume()
        logger.info(f"High-level training: episodes {self.episode}..{total - 1}, buffer {self.cfg.dqn.buffer_size}")
        while self.episode < total:
            row = self.run_episode(self.episode)
            self.curves.append(row)
            self.episode += 1
            if self.episode % self.cfg.dqn.checkpoint_every == 0:
                self.save()
            if self.episode % 10 == 0:
                recent = self.curves[-10:]
                logger.info(f"Episode {self.episode}: success {np.mean([r['success'] for r in recent]):.2f}, "
                            f"high steps {np.mean([r['high_steps'] for r in recent]):.1f}, eps {row['epsilon']:.3f}")
        self.save()
        return self.curves


def load_high_network(path: Path, cfg: RunConfig) -> QNetwork:
    """Online Q-network weights from a high-level checkpoint"""
    tensors, meta = load_checkpoint(path)
    if meta.get("level") != "high":
        raise CheckpointError(f"{path} is not a high-level checkpoint")
    size = int(meta.get("lomap_size", cfg.lomap.size))
    net = QNetwork(size, int(meta.get("n_actions", N_ACTIONS))).to(resolve_dtype(cfg.dtype))
    restore_module(net, tensors)
    return net
