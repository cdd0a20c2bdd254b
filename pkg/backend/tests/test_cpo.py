import math

import numpy as np
import pytest
import torch
from torch import nn
from torch.distributions import Categorical

from navsim.autodiff import ParamSet
from navsim.config import CpoConfig, LowNetConfig
from navsim.cpo import CpoBatch, conjugate_gradient, cpo_step_direction, cpo_update, prepare_batch
from navsim.errors import TrainingDivergedError
from navsim.low_policy import RolloutBatch, act, build_low_networks

T = torch.float64


def t(x):
    return torch.as_tensor(np.asarray(x, dtype=float), dtype=T)


def solve_direction(g, b, c, delta, H=None):
    """Step direction with the inverse products computed by a dense solve"""
    g, b = t(g), t(b)
    H = torch.eye(len(g), dtype=T) if H is None else t(H)
    return cpo_step_direction(g, b, c, delta, torch.linalg.solve(H, g), torch.linalg.solve(H, b)), H


class TestConjugateGradient:
    def test_matches_dense_solve(self):
        rng = np.random.default_rng(3)
        M = rng.normal(size=(8, 8))
        H = t(M @ M.T + np.eye(8))
        g = t(rng.normal(size=8))
        x, converged = conjugate_gradient(lambda v: H @ v, g, iters=50, tol=1e-20)
        assert converged
        np.testing.assert_allclose(x.numpy(), torch.linalg.solve(H, g).numpy(), atol=1e-6)

    def test_zero_rhs(self):
        x, converged = conjugate_gradient(lambda v: 2.0 * v, torch.zeros(4, dtype=T))
        assert converged
        assert torch.count_nonzero(x) == 0

    def test_negative_curvature_stops(self):
        x, converged = conjugate_gradient(lambda v: -v, t([1.0, 2.0]))
        assert not converged
        assert torch.count_nonzero(x) == 0

    def test_iteration_limit_reports_not_converged(self):
        H = t(np.diag([1.0, 10.0, 100.0]))
        _, converged = conjugate_gradient(lambda v: H @ v, t([1.0, 1.0, 1.0]), iters=1, tol=1e-20)
        assert not converged


class TestStepDirection:
    def test_unconstrained_fills_the_trust_region(self):
        H = [[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 3.0]]
        step, Ht = solve_direction([1.0, -2.0, 0.5], [0.0, 0.0, 0.0], -1.0, 0.01, H)
        assert step.optim_case == 4
        d = step.direction
        assert float(0.5 * d @ Ht @ d) == pytest.approx(0.01, rel=1e-6)
        h_inv_g = torch.linalg.solve(Ht, t([1.0, -2.0, 0.5]))
        cos = float(d @ h_inv_g / (d.norm() * h_inv_g.norm()))
        assert cos == pytest.approx(1.0, abs=1e-9)

    def test_far_constraint_is_ignored(self):
        step, _ = solve_direction([1.0, 1.0], [0.01, 0.0], -1.0, 0.5)
        assert step.optim_case == 3
        assert step.nu == 0.0
        np.testing.assert_allclose(step.direction.numpy(), [math.sqrt(0.5), math.sqrt(0.5)], atol=1e-6)

    def test_feasible_active_constraint(self):
        # max g.x on the unit disk with x0 <= 0.5
        g = [math.sqrt(0.5), math.sqrt(0.5)]
        step, _ = solve_direction(g, [1.0, 0.0], -0.5, 0.5)
        assert step.optim_case == 2
        assert step.nu > 0
        np.testing.assert_allclose(step.direction.numpy(), [0.5, math.sqrt(0.75)], atol=1e-6)

    def test_infeasible_but_recoverable(self):
        # x0 <= -0.2 on the unit disk
        g = [math.sqrt(0.5), math.sqrt(0.5)]
        step, _ = solve_direction(g, [1.0, 0.0], 0.2, 0.5)
        assert step.optim_case == 1
        np.testing.assert_allclose(step.direction.numpy(), [-0.2, math.sqrt(0.96)], atol=1e-6)

    def test_pure_recovery(self):
        step, _ = solve_direction([1.0, 0.0], [1.0, 0.0], 2.0, 0.5)
        assert step.optim_case == 0
        np.testing.assert_allclose(step.direction.numpy(), [-1.0, 0.0], atol=1e-6)

    def test_recovery_decreases_linearized_cost(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            b = rng.normal(size=3)
            c = np.linalg.norm(b) * rng.uniform(1.5, 3.0)
            step, _ = solve_direction(rng.normal(size=3), b, float(c), 0.05)
            assert step.optim_case == 0
            assert float(t(b) @ step.direction) < 0

    def test_matches_brute_force_on_the_disk(self):
        rng = np.random.default_rng(5)
        angles = np.linspace(0.0, 2 * np.pi, 200_000, endpoint=False)
        circle = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        checked = 0
        for _ in range(200):
            g, b = rng.normal(size=2), rng.normal(size=2)
            c = float(rng.uniform(-2.0, 2.0))
            if c > np.linalg.norm(b):
                continue
            feasible = circle[c + circle @ b <= 0]
            if len(feasible) == 0:
                continue
            best = float((feasible @ g).max())
            step, _ = solve_direction(g, b, c, 0.5)
            d = step.direction.numpy()
            assert d @ d <= 1.0 + 1e-6
            assert c + b @ d <= 1e-6
            assert g @ d >= best - 1e-3
            checked += 1
        assert checked > 100


class TwoArmBandit(nn.Module):
    """Arm 0 pays 1 with cost 1, arm 1 pays 0.5 with no cost"""
    rewards = np.array([1.0, 0.5])
    costs = np.array([1.0, 0.0])

    def __init__(self):
        super().__init__()
        self.logits = nn.Parameter(torch.zeros(2, dtype=T))

    def distribution(self, obs):
        return Categorical(logits=self.logits.expand(obs.shape[0], 2))

    def probs(self) -> np.ndarray:
        return torch.softmax(self.logits.detach(), 0).numpy()

    def exact_batch(self) -> CpoBatch:
        p = self.probs()
        return CpoBatch(
            obs=torch.zeros((2, 1), dtype=T),
            actions=torch.tensor([0, 1]),
            log_probs=t(np.log(p)),
            advantages=t(self.rewards - p @ self.rewards),
            cost_advantages=t(self.costs - p @ self.costs),
            mean_cost=float(p @ self.costs),
            weights=t(p),
        )


class TestCpoUpdate:
    def test_bandit_settles_on_the_cost_bound(self):
        bandit = TwoArmBandit()
        cfg = CpoConfig(delta=0.01, d_cost=0.2, value_iters=0)
        diags = [cpo_update(bandit, bandit.exact_batch(), cfg) for _ in range(100)]

        assert diags[0].optim_case == 0 and diags[0].recovery
        assert diags[0].cost_change < 0
        p = bandit.probs()
        assert p[0] == pytest.approx(0.2, abs=0.02)
        assert p @ bandit.rewards == pytest.approx(0.6, abs=0.01)

    def test_recovery_step_reduces_expected_cost(self):
        bandit = TwoArmBandit()
        before = bandit.probs()[0]
        diag = cpo_update(bandit, bandit.exact_batch(), CpoConfig(delta=0.01, d_cost=0.2, value_iters=0))
        assert diag.accepted
        assert bandit.probs()[0] < before

    def test_accepted_steps_respect_the_kl_bound(self):
        bandit = TwoArmBandit()
        cfg = CpoConfig(delta=0.005, d_cost=0.9, value_iters=0)
        for _ in range(20):
            diag = cpo_update(bandit, bandit.exact_batch(), cfg)
            if diag.accepted:
                assert diag.kl <= cfg.kl_accept_factor * cfg.delta
        # Unconstrained regime drifts toward the better arm
        assert bandit.probs()[0] > 0.5

    def test_nan_advantages_raise(self):
        bandit = TwoArmBandit()
        batch = bandit.exact_batch()
        batch.advantages = t([float("nan"), 0.0])
        with pytest.raises(TrainingDivergedError):
            cpo_update(bandit, batch, CpoConfig(value_iters=0))


def random_rollout(actor, n=64, seed=0):
    rng = np.random.default_rng(seed)
    rollout = RolloutBatch()
    for i in range(n):
        obs = rng.uniform(-1, 1, size=4 * 76)
        a = act(actor, obs, stochastic=True, rng=rng)
        rollout.add(obs, a.u, a.log_prob, rng.normal(), float(rng.random() < 0.1),
                    0.0, 0.0, (i + 1) % 16 == 0)
    return rollout


class TestPrepareBatch:
    def test_advantage_normalization(self):
        actor, _, _ = build_low_networks(0, LowNetConfig(frame_hidden=16, trunk=[32]), dtype="float64")
        rollout = random_rollout(actor)
        batch = prepare_batch(rollout, CpoConfig(), dtype=T)
        assert batch.obs.shape == (64, 304)
        assert batch.actions.shape == (64, 2)
        assert float(batch.advantages.mean()) == pytest.approx(0.0, abs=1e-9)
        assert float(batch.advantages.std()) == pytest.approx(1.0, abs=1e-6)
        assert float(batch.cost_advantages.mean()) == pytest.approx(0.0, abs=1e-9)
        assert batch.mean_cost == pytest.approx(np.mean(rollout.costs))

    def test_update_on_actor_and_critics(self):
        cfg_net = LowNetConfig(frame_hidden=16, trunk=[32])
        actor, critic, cost_critic = build_low_networks(0, cfg_net, dtype="float64")
        batch = prepare_batch(random_rollout(actor), CpoConfig(), dtype=T)
        before = [p.detach().clone() for p in actor.parameters()]
        with torch.no_grad():
            initial_loss = float(torch.mean((critic(batch.obs) - batch.returns) ** 2))
        cfg = CpoConfig(value_iters=30, value_lr=1e-2)

        diag = cpo_update(actor, batch, cfg,
                          critic, ParamSet.from_module(critic, lr=1e-2),
                          cost_critic, ParamSet.from_module(cost_critic, lr=1e-2))

        moved = any(not torch.equal(a, p) for a, p in zip(before, actor.parameters()))
        assert moved == diag.accepted
        if diag.accepted:
            assert diag.kl <= cfg.kl_accept_factor * cfg.delta
        assert math.isfinite(diag.value_loss) and math.isfinite(diag.cost_value_loss)
        assert diag.value_loss < initial_loss
