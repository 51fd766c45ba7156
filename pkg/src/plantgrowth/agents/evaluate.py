"""Evaluation harness: many independently seeded episodes per strategy."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from ..sim import SimConfig, SimError, run_episode


@dataclass
class EvalReport:
    strategy: str
    n_episodes: int
    mean_reward: float
    sd_reward: float
    mean_length: float
    failures: int
    mean_setpoint: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "n_episodes": self.n_episodes, "mean_reward": self.mean_reward,
                "sd_reward": self.sd_reward, "mean_length": self.mean_length, "failures": self.failures}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def evaluate_strategy(env_cfg: SimConfig, strategy, n_episodes: int = 1000, seed: int = 0,
                      name: str | None = None) -> EvalReport:
    """Mean and sd of total episode reward over ``n_episodes`` seeded episodes.

    Episode ``i`` uses the generator seeded by ``(seed, i)``, so results do not
    depend on execution order. Episodes whose strategy fails are counted in
    ``failures`` and left out of the statistics.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    cfg = replace(env_cfg, seed=seed)
    totals, lengths, setpoints, failures = [], [], [], 0
    for i in range(n_episodes):
        try:
            trace = run_episode(cfg, strategy, episode=i)
        except SimError:
            failures += 1
            continue
        totals.append(trace.total_reward)
        lengths.append(len(trace))
        setpoints.extend(list(s["env"].values()) for s in trace.steps)
    name = name or getattr(strategy, "name", getattr(strategy, "__name__", "strategy"))
    if not totals:
        return EvalReport(name, n_episodes, float("nan"), float("nan"), float("nan"), failures)
    totals = np.array(totals)
    return EvalReport(name, n_episodes, float(totals.mean()), float(totals.std()), float(np.mean(lengths)),
                      failures, np.mean(np.array(setpoints), axis=0))
