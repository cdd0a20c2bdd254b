"""
Constrained policy optimization for the low-level policy

Trust-region update that maximizes the reward surrogate subject to a
linearized bound on the expected contact cost, with a recovery step when the
current policy already violates the bound.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import torch
from torch import nn
from torch.distributions import kl_divergence
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from .autodiff import ParamSet, adam_step
from .config import CpoConfig
from .errors import TrainingDivergedError
from .low_policy import RolloutBatch, gae

logger = logging.getLogger(__name__)

EPS = 1e-8


@dataclass
class CpoBatch:
    """Tensors for one policy update; weights default to uniform"""
    obs: torch.Tensor
    actions: torch.Tensor
    log_probs: torch.Tensor
    advantages: torch.Tensor
    cost_advantages: torch.Tensor
    mean_cost: float
    returns: Optional[torch.Tensor] = None
    cost_returns: Optional[torch.Tensor] = None
    weights: Optional[torch.Tensor] = None

    def mean(self, x: torch.Tensor) -> torch.Tensor:
        if self.weights is None:
            return x.mean()
        return (x * self.weights).sum() / self.weights.sum()


@dataclass
class CpoDiagnostics:
    optim_case: int
    recovery: bool
    accepted: bool
    backtracks: int
    kl: float
    surrogate_improvement: float
    cost_change: float
    mean_cost: float
    constraint_slack: float
    cg_fallback: bool
    step_norm: float
    value_loss: float = 0.0
    cost_value_loss: float = 0.0


def conjugate_gradient(hvp: Callable[[torch.Tensor], torch.Tensor], g: torch.Tensor, iters: int = 10,
                       tol: float = 1e-10) -> Tuple[torch.Tensor, bool]:
    """
    Approximately solve H x = g

    Returns:
        (x, converged); converged is False when the residual is still above tol
        or a direction of non-positive curvature was met
    """
    x = torch.zeros_like(g)
    r = g.clone()
    p = g.clone()
    rr = torch.dot(r, r)
    if rr <= tol:
        return x, True
    for _ in range(iters):
        hp = hvp(p)
        curvature = torch.dot(p, hp)
        if curvature <= 0 or not torch.isfinite(curvature):
            return x, False
        alpha = rr / curvature
        x = x + alpha * p
        r = r - alpha * hp
        rr_new = torch.dot(r, r)
        if rr_new <= tol:
            return x, True
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, False


@dataclass
class StepDirection:
    direction: torch.Tensor
    optim_case: int
    lam: float
    nu: float


def cpo_step_direction(g: torch.Tensor, b: torch.Tensor, c: float, delta: float,
                       h_inv_g: torch.Tensor, h_inv_b: torch.Tensor) -> StepDirection:
    """
    Solve the dual of: max g.x  s.t.  c + b.x <= 0,  0.5 x'Hx <= delta

    Cases: 4 unconstrained (no cost gradient, feasible), 3 constraint inactive
    over the whole trust region, 2 and 1 constraint active (feasible and
    infeasible current policy), 0 infeasible trust region (pure recovery).
    """
    q = float(torch.dot(g, h_inv_g))
    if float(torch.dot(b, b)) <= EPS and c < 0:
        lam = math.sqrt(max(q, 0.0) / (2.0 * delta))
        return StepDirection(h_inv_g / (lam + EPS), 4, lam, 0.0)

    r = float(torch.dot(g, h_inv_b))
    s = float(torch.dot(b, h_inv_b))
    A = q - r ** 2 / (s + EPS)
    B = 2.0 * delta - c ** 2 / (s + EPS)
    if c < 0 and B < 0:
        case = 3
    elif c < 0 <= B:
        case = 2
    elif c >= 0 and B >= 0:
        case = 1
    else:
        case = 0

    if case == 3:
        lam = math.sqrt(max(q, 0.0) / (2.0 * delta))
        nu = 0.0
    elif case in (1, 2):
        ratio = -r / c if c != 0 else math.copysign(math.inf, -r)
        LA, LB = (0.0, ratio), (ratio, math.inf)
        if c >= 0:
            LA, LB = LB, LA

        def proj(x, L):
            return max(L[0], min(L[1], x))

        lam_a = proj(math.sqrt(max(A, 0.0) / B) if B > 0 else math.inf, LA)
        lam_b = proj(math.sqrt(max(q, 0.0) / (2.0 * delta)), LB)

        def f_a(lam):
            return -0.5 * (A / (lam + EPS) + B * lam) + r * c / (s + EPS)

        def f_b(lam):
            return -0.5 * (q / (lam + EPS) + 2.0 * delta * lam)

        lam = lam_a if f_a(lam_a) >= f_b(lam_b) else lam_b
        nu = max(0.0, lam * c + r) / (s + EPS)
    else:
        lam = 0.0
        nu = math.sqrt(2.0 * delta / (s + EPS))

    if case == 0:
        direction = -nu * h_inv_b
    else:
        direction = (h_inv_g - nu * h_inv_b) / (lam + EPS)
    return StepDirection(direction, case, lam, nu)


def _log_prob(policy: nn.Module, batch: CpoBatch) -> torch.Tensor:
    return policy.distribution(batch.obs).log_prob(batch.actions)


def _surrogates(policy: nn.Module, batch: CpoBatch) -> Tuple[torch.Tensor, torch.Tensor]:
    ratio = torch.exp(_log_prob(policy, batch) - batch.log_probs)
    return batch.mean(ratio * batch.advantages), batch.mean(ratio * batch.cost_advantages)


def _flat_grad(y: torch.Tensor, params, **kwargs) -> torch.Tensor:
    grads = torch.autograd.grad(y, params, allow_unused=True, **kwargs)
    return torch.cat([(torch.zeros_like(p) if g is None else g).reshape(-1) for g, p in zip(grads, params)])


def fisher_vector_product(policy: nn.Module, batch: CpoBatch, old_dist, damping: float) -> Callable:
    params = [p for p in policy.parameters() if p.requires_grad]

    def hvp(v: torch.Tensor) -> torch.Tensor:
        kl = batch.mean(kl_divergence(old_dist, policy.distribution(batch.obs)))
        grad_kl = _flat_grad(kl, params, create_graph=True)
        return _flat_grad(torch.dot(grad_kl, v), params) + damping * v

    return hvp


def _fit_value(critic: nn.Module, params: ParamSet, obs: torch.Tensor, target: torch.Tensor,
               iters: int, lr: float) -> float:
    loss = torch.zeros(())
    for _ in range(iters):
        params.optimizer.zero_grad()
        loss = torch.mean((critic(obs) - target) ** 2)
        loss.backward()
        adam_step(params, lr=lr)
    return float(loss)


def prepare_batch(rollout: RolloutBatch, cfg: CpoConfig, dtype: torch.dtype = torch.float32) -> CpoBatch:
    """Advantages for both streams; reward advantages are standardized, cost advantages centered"""
    adv, cadv, ret, cret = gae(rollout, cfg.gamma, cfg.lam)
    adv = (adv - adv.mean()) / (adv.std() + EPS)
    cadv = cadv - cadv.mean()

    def t(x):
        return torch.as_tensor(np.asarray(x), dtype=dtype)

    return CpoBatch(
        obs=t(np.stack(rollout.obs)),
        actions=t(rollout.actions),
        log_probs=t(rollout.log_probs),
        advantages=t(adv),
        cost_advantages=t(cadv),
        mean_cost=float(np.mean(rollout.costs)),
        returns=t(ret),
        cost_returns=t(cret),
    )


def cpo_update(policy: nn.Module, batch: CpoBatch, cfg: CpoConfig,
               critic: Optional[nn.Module] = None, critic_params: Optional[ParamSet] = None,
               cost_critic: Optional[nn.Module] = None, cost_critic_params: Optional[ParamSet] = None
               ) -> CpoDiagnostics:
    """
    One constrained trust-region policy update plus critic regression

    The policy must expose distribution(obs). The constraint value is
    c = mean_cost - d_cost; candidate steps are backtracked until the KL is
    within kl_accept_factor * delta, the reward surrogate does not drop (except
    in recovery) and the cost surrogate does not grow past the slack.

    Raises:
        TrainingDivergedError: the surrogate or its gradient is not finite
    """
    params = [p for p in policy.parameters() if p.requires_grad]
    with torch.no_grad():
        old_dist = policy.distribution(batch.obs)
    surr, surr_cost = _surrogates(policy, batch)
    g = _flat_grad(surr, params, retain_graph=True)
    b = _flat_grad(surr_cost, params)
    if not (torch.isfinite(g).all() and torch.isfinite(b).all()):
        raise TrainingDivergedError("non-finite policy gradient",
                                    {"surrogate": float(surr), "cost_surrogate": float(surr_cost)})
    c = batch.mean_cost - cfg.d_cost

    hvp = fisher_vector_product(policy, batch, old_dist, cfg.cg_damping)
    h_inv_g, ok_g = conjugate_gradient(hvp, g, cfg.cg_iters, cfg.cg_tol)
    h_inv_b, ok_b = conjugate_gradient(hvp, b, cfg.cg_iters, cfg.cg_tol)
    cg_fallback = False
    if not (torch.isfinite(h_inv_g).all() and torch.isfinite(h_inv_b).all()) or \
            (not ok_g and float(torch.dot(g, h_inv_g)) <= 0):
        logger.warning("Conjugate gradient failed, falling back to scaled gradients")
        h_inv_g, h_inv_b = g.clone(), b.clone()
        cg_fallback = True
    elif not (ok_g and ok_b):
        logger.debug("Conjugate gradient hit the iteration limit before the tolerance")

    step = cpo_step_direction(g, b, c, cfg.delta, h_inv_g, h_inv_b)
    recovery = step.optim_case == 0
    if recovery:
        logger.info(f"Infeasible policy (mean cost {batch.mean_cost:.4f}), taking a recovery step")

    old = parameters_to_vector(params).detach()
    surr_old, cost_old = float(surr), float(surr_cost)
    accepted = False
    kl = surr_gain = cost_change = 0.0
    k = 0
    for k in range(cfg.backtrack_steps):
        vector_to_parameters(old + (cfg.backtrack_coeff ** k) * step.direction, params)
        with torch.no_grad():
            kl = float(batch.mean(kl_divergence(old_dist, policy.distribution(batch.obs))))
            s_new, c_new = _surrogates(policy, batch)
        surr_gain = float(s_new) - surr_old
        cost_change = float(c_new) - cost_old
        if not math.isfinite(kl):
            continue
        if (kl <= cfg.kl_accept_factor * cfg.delta
                and (surr_gain >= 0 or step.optim_case <= 1)
                and cost_change <= max(-c, 0.0)):
            accepted = True
            break
    if not accepted:
        vector_to_parameters(old, params)
        logger.warning(f"Line search rejected every step (case {step.optim_case}), keeping the policy")
        kl = surr_gain = cost_change = 0.0

    diag = CpoDiagnostics(
        optim_case=step.optim_case, recovery=recovery, accepted=accepted, backtracks=k, kl=kl,
        surrogate_improvement=surr_gain, cost_change=cost_change, mean_cost=batch.mean_cost,
        constraint_slack=-c, cg_fallback=cg_fallback, step_norm=float(step.direction.norm()),
    )
    if critic is not None and critic_params is not None and batch.returns is not None:
        diag.value_loss = _fit_value(critic, critic_params, batch.obs, batch.returns, cfg.value_iters, cfg.value_lr)
    if cost_critic is not None and cost_critic_params is not None and batch.cost_returns is not None:
        diag.cost_value_loss = _fit_value(cost_critic, cost_critic_params, batch.obs, batch.cost_returns,
                                          cfg.value_iters, cfg.value_lr)
    return diag
