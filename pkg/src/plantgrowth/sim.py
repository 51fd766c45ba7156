"""Episodic plant-growth simulator driven by a trained growth-rate model."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import K_MAX, K_MIN, GrowthParams, RewardConfig, inverse_logistic, logistic_cc, reward
from .envmodel.features import feature_vector
from .envmodel.model import TrainedGrowthModel, predict_k
from .ingest import ENV_FIELDS


class SimError(ValueError):
    pass


class StrategyError(SimError):
    pass


@dataclass(frozen=True)
class EnvStats:
    mean: np.ndarray
    sd: np.ndarray
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        for name in ("mean", "sd", "min", "max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.sd < 0) or np.any(self.min > self.mean) or np.any(self.mean > self.max):
            raise SimError("EnvStats needs sd >= 0 and min <= mean <= max")

    @classmethod
    def from_batches(cls, batches) -> "EnvStats":
        env = np.concatenate([b.env_matrix() for b in batches])
        return cls(env.mean(axis=0), env.std(axis=0), env.min(axis=0), env.max(axis=0))

    def clamp(self, env) -> np.ndarray:
        return np.clip(env, self.min, self.max)

    def to_dict(self) -> dict:
        return {f: {"mean": float(self.mean[i]), "sd": float(self.sd[i]), "min": float(self.min[i]),
                    "max": float(self.max[i])} for i, f in enumerate(ENV_FIELDS)}

    @classmethod
    def from_dict(cls, obj: dict) -> "EnvStats":
        return cls(*(np.array([obj[f][key] for f in ENV_FIELDS]) for key in ("mean", "sd", "min", "max")))


@dataclass(frozen=True)
class SimConfig:
    model: TrainedGrowthModel
    stats: EnvStats
    init: GrowthParams = GrowthParams(cc_max=1.0, k=0.2, t0=20.0)
    horizon_days: int = 35
    start_cc: float = 0.03
    terminal_cc: float = 0.95
    reward_cfg: RewardConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.start_cc < self.terminal_cc <= 1:
            raise SimError("need 0 < start_cc < terminal_cc <= 1")
        if self.start_cc >= self.init.cc_max:
            raise SimError(f"start_cc {self.start_cc} must lie below cc_max {self.init.cc_max}")
        if self.horizon_days < 1:
            raise SimError("horizon_days must be >= 1")
        if self.reward_cfg is None:
            object.__setattr__(self, "reward_cfg", RewardConfig(k_target=self.model.k_max))


@dataclass(frozen=True)
class SimState:
    day: int
    t: float
    cc: float
    k: float
    last_env: np.ndarray
    env_history: np.ndarray = field(repr=False)
    cumulative_reward: float = 0.0
    done: bool = False


def sample_env(stats: EnvStats, rng: np.random.Generator) -> np.ndarray:
    """Independent normal draw per variable, clamped to the observed range."""
    return stats.clamp(stats.mean + stats.sd * rng.standard_normal(stats.mean.size))


def normalize_delta_k(dk_hat: float, norm: tuple[float, float]) -> float:
    """Scale a predicted rate change by ``delta_k_max / k_max``."""
    delta_k_max, k_max = norm
    if not k_max > 0:
        raise SimError(f"k_max must be positive, got {k_max}")
    return dk_hat * delta_k_max / k_max


def episode_rng(cfg: SimConfig, episode: int = 0) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, episode])


def reset(cfg: SimConfig, rng: np.random.Generator | None = None) -> SimState:
    rng = episode_rng(cfg) if rng is None else rng
    env = sample_env(cfg.stats, rng)
    return SimState(day=0, t=inverse_logistic(cfg.start_cc, cfg.init), cc=cfg.start_cc, k=cfg.init.k,
                    last_env=env, env_history=env[None, :])


@dataclass(frozen=True)
class StepInfo:
    action: np.ndarray
    env: np.ndarray
    k_hat: float
    dk_norm: float


def step(state: SimState, action, cfg: SimConfig) -> tuple[SimState, float, bool, StepInfo]:
    """Advance one day under environment setpoints ``action``."""
    if state.done:
        raise SimError("cannot step a finished episode")
    action = np.asarray(action, dtype=float)
    env = cfg.stats.clamp(action)
    history = np.vstack([state.env_history, env])
    model = cfg.model
    features = feature_vector(history, state.k, model.feature_config)
    k_hat = predict_k(model, features, state.cc, k_now=state.k)
    dk_norm = normalize_delta_k(k_hat - state.k, model.norm)
    k_new = min(max(state.k + dk_norm, K_MIN), K_MAX)
    t = state.t + 1.0
    p = cfg.init
    # cover never shrinks day over day
    cc = max(state.cc, logistic_cc(t, GrowthParams(p.cc_max, k_new, p.t0)))
    r = reward(k_new, cfg.reward_cfg)
    day = state.day + 1
    done = cc >= cfg.terminal_cc or day >= cfg.horizon_days
    new = SimState(day=day, t=t, cc=cc, k=k_new, last_env=env, env_history=history,
                   cumulative_reward=state.cumulative_reward + r, done=done)
    return new, r, done, StepInfo(action, env, k_hat, dk_norm)


@dataclass
class EpisodeTrace:
    steps: list[dict]
    total_reward: float

    def __len__(self):
        return len(self.steps)

    def write_jsonl(self, out) -> None:
        for rec in self.steps:
            out.write(json.dumps(rec) + "\n")


def _env_dict(values) -> dict:
    return {f: float(v) for f, v in zip(ENV_FIELDS, values)}


def run_episode(cfg: SimConfig, strategy, episode: int = 0) -> EpisodeTrace:
    """Reset, then step with ``strategy(state, rng)`` until the episode ends."""
    rng = episode_rng(cfg, episode)
    state = reset(cfg, rng)
    steps = []
    while not state.done:
        action = np.asarray(strategy(state, rng), dtype=float)
        if action.shape != (len(ENV_FIELDS),) or not np.all(np.isfinite(action)):
            raise StrategyError(f"strategy emitted an invalid action {action!r} on day {state.day}")
        state, r, done, info = step(state, action, cfg)
        steps.append({"day": state.day, "t": state.t, "cc": state.cc, "k": state.k,
                      "action": _env_dict(info.action), "env": _env_dict(info.env),
                      "k_hat": info.k_hat, "dk_norm": info.dk_norm, "reward": r, "done": done})
    return EpisodeTrace(steps, state.cumulative_reward)
