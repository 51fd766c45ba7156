"""Baseline control strategies: uniform random setpoints and data replay."""
from __future__ import annotations

import numpy as np


def random_strategy(state, rng: np.random.Generator, stats) -> np.ndarray:
    """Uniform setpoint per variable over its observed [min, max]."""
    return stats.min + (stats.max - stats.min) * rng.random(stats.min.size)


def replay_strategy(state, recorded) -> np.ndarray:
    """Recorded environment of the matching day, holding the last day past the end."""
    if not recorded.days:
        raise ValueError("cannot replay an empty batch")
    idx = min(state.day, len(recorded.days) - 1)
    return recorded.days[idx].env.as_array()


class RandomStrategy:
    name = "random"

    def __init__(self, stats):
        self.stats = stats

    def __call__(self, state, rng):
        return random_strategy(state, rng, self.stats)


class ReplayStrategy:
    """Replay one of several recorded batches, chosen per episode from the rng.

    The batch is drawn when a new episode starts (``state.day == 0``).
    """

    name = "replay"

    def __init__(self, batches):
        self.batches = list(batches)
        if not self.batches:
            raise ValueError("need at least one recorded batch")
        self._current = self.batches[0]

    def __call__(self, state, rng):
        if state.day == 0:
            self._current = self.batches[int(rng.integers(len(self.batches)))]
        return replay_strategy(state, self._current)


class SampledEnvStrategy:
    """Fresh normal draw around the training means each day (clamped to range)."""

    name = "sampled"

    def __init__(self, stats):
        self.stats = stats

    def __call__(self, state, rng):
        from ..sim import sample_env
        return sample_env(self.stats, rng)
