"""Supervised rows linking one day's environment to the next day's growth rate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..curvefit import FIRST_ROLLING_DAY
from ..ingest import ENV_FIELDS

TARGET_KINDS = ("k", "delta_k")


@dataclass(frozen=True)
class FeatureConfig:
    include_k: bool = False
    include_interactions: bool = False
    ma_windows: tuple[int, ...] = ()
    target_kind: str = "k"

    def __post_init__(self):
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"target_kind must be one of {TARGET_KINDS}")
        if any(w < 2 or w > 6 for w in self.ma_windows):
            raise ValueError("moving-average windows must lie in 2..6 days")

    @property
    def uses_k(self) -> bool:
        return self.include_k or self.include_interactions

    def to_dict(self) -> dict:
        return {"include_k": self.include_k, "include_interactions": self.include_interactions,
                "ma_windows": list(self.ma_windows), "target_kind": self.target_kind}

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureConfig":
        return cls(bool(obj.get("include_k", False)), bool(obj.get("include_interactions", False)),
                   tuple(int(w) for w in obj.get("ma_windows", ())), obj.get("target_kind", "k"))


@dataclass
class FeatureRow:
    batch_id: str
    t: int
    features: np.ndarray
    cc_t: float
    k_t: float
    k_next: float
    target: float = field(default=float("nan"))


def feature_names(config: FeatureConfig) -> list[str]:
    names = list(ENV_FIELDS)
    if config.include_k:
        names.append("k")
    if config.include_interactions:
        names += [f"k*{f}" for f in ENV_FIELDS]
    for w in config.ma_windows:
        names += [f"{f}_ma{w}" for f in ENV_FIELDS]
    return names


def feature_vector(env_history: np.ndarray, k_t: float, config: FeatureConfig) -> np.ndarray:
    """Features for the last row of ``env_history`` (days x 7, oldest first).

    Moving averages include the current day and fall back to the mean of the
    available prefix when the history is shorter than the window.
    """
    env_t = env_history[-1]
    parts = [env_t]
    if config.include_k:
        parts.append(np.array([k_t]))
    if config.include_interactions:
        parts.append(k_t * env_t)
    for w in config.ma_windows:
        parts.append(env_history[-w:].mean(axis=0))
    return np.concatenate(parts)


def build_features(batch, fits, config: FeatureConfig) -> list[FeatureRow]:
    """One row per day ``t`` from 5 to the second-to-last rolling fit.

    The target is the fitted rate of the window ending at ``t + 1`` (or its
    change from the window ending at ``t``).
    """
    env = batch.env_matrix()
    cc = batch.cc_array()
    last = fits.entries[-1][0]
    rows = []
    for t in range(FIRST_ROLLING_DAY, last):
        k_t = fits.at(t).params.k
        k_next = fits.at(t + 1).params.k
        target = k_next if config.target_kind == "k" else k_next - k_t
        rows.append(FeatureRow(batch.batch_id, t, feature_vector(env[: t + 1], k_t, config),
                               float(cc[t]), k_t, k_next, target))
    return rows
