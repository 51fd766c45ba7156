"""Clipped-surrogate policy optimisation (PPO) for the growth simulator.

The simulator is treated as a black box; gradients flow only through the
policy/value network.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .. import _kernels
from ..sim import SimConfig, reset, step
from .policy import ACT_DIM, LOG_STD_MAX, LOG_STD_MIN, Policy, gaussian_logp

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 4
    rollout_steps: int = 2048
    minibatch: int = 64
    lr: float = 3e-4
    iterations: int = 100
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: tuple[int, ...] = (32, 32)

    def __post_init__(self):
        if not 0 < self.clip < 1 or not 0 <= self.gamma <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ValueError("need 0 < clip < 1 and gamma, gae_lambda in [0, 1]")
        if min(self.epochs, self.rollout_steps, self.minibatch, self.iterations) < 1 or self.lr <= 0:
            raise ValueError("epochs, rollout_steps, minibatch, iterations and lr must be positive")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden layer sizes must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "PPOConfig":
        obj = dict(obj)
        unknown = set(obj) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown agent hyperparameters: {sorted(unknown)}")
        if "hidden" in obj:
            obj["hidden"] = tuple(int(h) for h in obj["hidden"])
        return cls(**obj)


@dataclass
class TrainReport:
    iterations: int
    episodes_per_iteration: list[int]
    reward_curve: list[float]
    policy: Policy
    diagnostics: list[dict] = field(default_factory=list)


def clipped_surrogate(logp, old_logp, adv, clip):
    """Mean clipped objective and its derivative w.r.t. each sample's ``logp``."""
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    use = unclipped <= clipped
    n = len(adv)
    objective = float(np.mean(np.minimum(unclipped, clipped)))
    return objective, np.where(use, unclipped, 0.0) / n


def gaussian_logp_grads(actions, mean, log_std):
    """d logp / d mean and d logp / d log_std for a diagonal Gaussian."""
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    return diff * inv_var, diff * diff * inv_var - 1.0


def ppo_loss(policy: Policy, params, batch: dict, cfg: PPOConfig, with_grad: bool = True):
    """Total loss (negated surrogate + value loss - entropy bonus) and its gradient."""
    out, acts = policy.net.forward(batch["obs"], params)
    mean = out[:, :ACT_DIM]
    raw_log_std = out[:, ACT_DIM:2 * ACT_DIM]
    log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
    value = out[:, -1]
    n = len(value)
    logp = gaussian_logp(batch["act"], mean, log_std)
    surr, dsurr = clipped_surrogate(logp, batch["logp"], batch["adv"], cfg.clip)
    vdiff = value - batch["ret"]
    v_loss = 0.5 * float(np.mean(vdiff ** 2))
    entropy = float(np.mean(np.sum(log_std + 0.5 + 0.5 * math.log(2 * math.pi), axis=1)))
    loss = -surr + cfg.vf_coef * v_loss - cfg.ent_coef * entropy
    if not with_grad:
        return loss, None
    dmean, dlogstd = gaussian_logp_grads(batch["act"], mean, log_std)
    grad_out = np.empty_like(out)
    grad_out[:, :ACT_DIM] = -dsurr[:, None] * dmean
    inside = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
    grad_out[:, ACT_DIM:2 * ACT_DIM] = (-dsurr[:, None] * dlogstd - cfg.ent_coef / n) * inside
    grad_out[:, -1] = cfg.vf_coef * vdiff / n
    return loss, policy.net.backward(acts, grad_out, params)


class Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def collect_rollout(policy: Policy, env_cfg: SimConfig, n_steps: int, seed: int, iteration: int):
    """Run whole episodes until at least ``n_steps`` transitions are gathered."""
    obs, acts, logps, values, rewards, dones, totals = [], [], [], [], [], [], []
    stats = env_cfg.stats
    episode = 0
    while len(rewards) < n_steps:
        rng = np.random.default_rng([seed, iteration, episode])
        state = reset(env_cfg, rng)
        while not state.done:
            o = policy.observe(state)
            a, lp, v = policy.sample(o, rng)
            state, r, done, _ = step(state, stats.clamp(policy.to_setpoint(a)), env_cfg)
            obs.append(o)
            acts.append(a)
            logps.append(lp)
            values.append(v)
            rewards.append(r)
            dones.append(1.0 if done else 0.0)
        totals.append(state.cumulative_reward)
        episode += 1
    return {
        "obs": np.array(obs), "act": np.array(acts), "logp": np.array(logps),
        "value": np.array(values), "reward": np.array(rewards), "done": np.array(dones),
        "episode_rewards": np.array(totals),
    }


def train_policy(env_cfg: SimConfig, hyper: PPOConfig | None = None, seed: int = 0) -> TrainReport:
    """Train a Gaussian MLP policy with PPO; deterministic given ``seed``."""
    hyper = hyper or PPOConfig()
    policy = Policy.create(env_cfg.stats, env_cfg.horizon_days, env_cfg.model.k_max, hidden=hyper.hidden, seed=seed)
    opt = Adam(policy.net.params.size, hyper.lr)
    shuffle_rng = np.random.default_rng([seed, 1 << 20])
    curve, episodes, diagnostics = [], [], []
    for it in range(hyper.iterations):
        buf = collect_rollout(policy, env_cfg, hyper.rollout_steps, seed, it)
        adv, ret = _kernels.gae(buf["reward"], buf["value"], buf["done"], 0.0, hyper.gamma, hyper.gae_lambda)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(adv)
        losses = []
        for _ in range(hyper.epochs):
            perm = shuffle_rng.permutation(n)
            for start in range(0, n, hyper.minibatch):
                idx = perm[start:start + hyper.minibatch]
                mb = {"obs": buf["obs"][idx], "act": buf["act"][idx], "logp": buf["logp"][idx],
                      "adv": adv[idx], "ret": ret[idx]}
                loss, grad = ppo_loss(policy, policy.net.params, mb, hyper)
                if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                    raise TrainingError(
                        f"non-finite loss at iteration {it}: loss={loss}, "
                        f"adv mean={adv[idx].mean():.4g}, ret mean={ret[idx].mean():.4g}, "
                        f"batch size={len(idx)}")
                norm = float(np.linalg.norm(grad))
                if norm > hyper.max_grad_norm:
                    grad = grad * (hyper.max_grad_norm / norm)
                policy.net.params = opt.step(policy.net.params, grad)
                losses.append(loss)
        mean_reward = float(buf["episode_rewards"].mean())
        curve.append(mean_reward)
        episodes.append(len(buf["episode_rewards"]))
        diagnostics.append({"iteration": it, "mean_reward": mean_reward, "loss": float(np.mean(losses)),
                            "steps": n})
        log.debug("iteration %d: mean episode reward %.4f", it, mean_reward)
    return TrainReport(hyper.iterations, episodes, curve, policy, diagnostics)
