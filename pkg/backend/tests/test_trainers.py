from pathlib import Path

import numpy as np
import pytest
import torch

from navsim.errors import CheckpointError
from navsim.high_trainer import HighLevelTrainer, load_high_network
from navsim.low_trainer import LowLevelTrainer, load_low_actor, random_arena, random_subgoal
from navsim.scenario import load_scenario_file
from navsim.utils import episode_rng, read_curves

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "config" / "scenarios"


def same_parameters(a, b):
    pa, pb = dict(a.named_parameters()), dict(b.named_parameters())
    return pa.keys() == pb.keys() and all(torch.equal(pa[k], pb[k]) for k in pa)


@pytest.fixture
def tiny_room(small_cfg):
    return load_scenario_file(SCENARIO_DIR / "tiny_room.world", sim_cfg=small_cfg.sim,
                              robot_cfg=small_cfg.robot, oracle_cfg=small_cfg.oracle)


class TestHighLevelTrainer:
    def test_train_writes_checkpoint_and_curves(self, small_cfg, tiny_room, tmp_path):
        trainer = HighLevelTrainer(small_cfg, [tiny_room], tmp_path)
        curves = trainer.train()
        assert [r["episode"] for r in curves] == [0, 1]
        assert all(1 <= r["high_steps"] <= small_cfg.dqn.max_high_steps for r in curves)
        assert trainer.checkpoint_path.exists()
        assert len(read_curves(tmp_path / "high_curves.csv")) == 2

    def test_network_matches_sector_grid(self, small_cfg, tiny_room, tmp_path):
        trainer = HighLevelTrainer(small_cfg, [tiny_room], tmp_path)
        assert trainer.learner.online.n_actions == 30
        trainer.train(1)
        net = load_high_network(trainer.checkpoint_path, small_cfg)
        assert net.n_actions == 30
        assert same_parameters(net, trainer.learner.online)

    def test_resume_restores_and_continues(self, small_cfg, tiny_room, tmp_path):
        first = HighLevelTrainer(small_cfg, [tiny_room], tmp_path)
        first.train(2)

        resumed_cfg = small_cfg.model_copy(update={"resume": True})
        restored = HighLevelTrainer(resumed_cfg, [tiny_room], tmp_path)
        restored.resume()
        assert restored.episode == 2
        assert restored.high_steps == first.high_steps
        assert same_parameters(restored.learner.online, first.learner.online)
        assert same_parameters(restored.learner.target, first.learner.target)

        second = HighLevelTrainer(resumed_cfg, [tiny_room], tmp_path)
        curves = second.train(3)
        assert [r["episode"] for r in curves] == [0, 1, 2]
        assert second.episode == 3

    def test_seeded_runs_agree(self, small_cfg, tiny_room, tmp_path):
        a = HighLevelTrainer(small_cfg, [tiny_room], tmp_path / "a").train(2)
        b = HighLevelTrainer(small_cfg, [tiny_room], tmp_path / "b").train(2)
        assert [(r["return"], r["high_steps"], r["control_steps"]) for r in a] == \
               [(r["return"], r["high_steps"], r["control_steps"]) for r in b]

    def test_needs_a_scenario(self, small_cfg, tmp_path):
        with pytest.raises(ValueError):
            HighLevelTrainer(small_cfg, [], tmp_path)


class TestLowLevelTrainer:
    def test_random_arena(self, small_cfg):
        arena = random_arena(small_cfg, episode_rng(0, 4))
        tl = small_cfg.train_low
        assert len(arena.world.circles) <= tl.max_obstacles
        assert len(arena.pedestrians) <= tl.max_pedestrians
        assert arena.horizon_steps == tl.episode_steps
        x, y, _ = arena.robot_start
        assert arena.world.clearance(np.array([[x, y]]))[0] >= 0.5

    def test_random_subgoal_in_range(self, small_cfg):
        rng = episode_rng(0, 1)
        arena = random_arena(small_cfg, rng)
        pose = arena.robot_start
        for _ in range(20):
            gx, gy = random_subgoal(arena.world, pose, small_cfg, rng)
            assert arena.world.contains(gx, gy)

    def test_collect_fills_the_batch(self, small_cfg, tmp_path):
        trainer = LowLevelTrainer(small_cfg, tmp_path)
        batch, stats = trainer.collect()
        assert len(batch) >= small_cfg.train_low.batch_steps
        assert set(batch.costs) <= {0.0, 1.0}
        assert stats["episodes"] >= 2
        assert 0.0 <= stats["arrival_rate"] <= 1.0

    def test_train_and_reload_actor(self, small_cfg, tmp_path):
        trainer = LowLevelTrainer(small_cfg, tmp_path)
        curves = trainer.train()
        assert [r["update"] for r in curves] == [0, 1]
        for row in curves:
            if row["accepted"]:
                assert row["kl"] <= small_cfg.cpo.kl_accept_factor * small_cfg.cpo.delta
        actor = load_low_actor(trainer.checkpoint_path, small_cfg)
        assert same_parameters(actor, trainer.actor)

    def test_resume_continues(self, small_cfg, tmp_path):
        LowLevelTrainer(small_cfg, tmp_path).train(1)
        trainer = LowLevelTrainer(small_cfg.model_copy(update={"resume": True}), tmp_path)
        curves = trainer.train(2)
        assert [r["update"] for r in curves] == [0, 1]
        assert trainer.update == 2

    def test_wrong_level_checkpoint(self, small_cfg, tmp_path):
        trainer = LowLevelTrainer(small_cfg, tmp_path)
        trainer.save()
        with pytest.raises(CheckpointError):
            load_high_network(trainer.checkpoint_path, small_cfg)


@pytest.mark.slow
class TestLongerRuns:
    def test_high_training_losses_stay_finite(self, small_cfg, tiny_room, tmp_path):
        curves = HighLevelTrainer(small_cfg, [tiny_room], tmp_path).train(30)
        losses = [r["loss"] for r in curves if not np.isnan(r["loss"])]
        assert losses
        assert np.all(np.isfinite(losses))
        eps = [r["epsilon"] for r in curves]
        assert eps == sorted(eps, reverse=True)

    def test_low_training_respects_trust_region(self, small_cfg, tmp_path):
        curves = LowLevelTrainer(small_cfg, tmp_path).train(10)
        accepted = [r for r in curves if r["accepted"]]
        assert len(curves) == 10
        assert all(r["kl"] <= small_cfg.cpo.kl_accept_factor * small_cfg.cpo.delta for r in accepted)
