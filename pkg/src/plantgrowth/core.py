"""Logistic growth curve, its inverse, and the growth-rate reward."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

K_MIN = 1e-6
K_MAX = 5.0
T0_MAX = 100.0


class DomainError(ValueError):
    """Argument outside the domain of a curve operation."""


@dataclass(frozen=True)
class GrowthParams:
    cc_max: float = 1.0
    k: float = 0.2
    t0: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.cc_max <= 1.0):
            raise DomainError(f"cc_max must be in (0, 1], got {self.cc_max}")
        if not (0.0 < self.k <= K_MAX):
            raise DomainError(f"k must be in (0, {K_MAX}], got {self.k}")
        if not (0.0 <= self.t0 <= T0_MAX):
            raise DomainError(f"t0 must be in [0, {T0_MAX}], got {self.t0}")

    def as_array(self) -> np.ndarray:
        return np.array([self.cc_max, self.k, self.t0])


@dataclass(frozen=True)
class RewardConfig:
    k_target: float
    scale: float = 100.0

    def __post_init__(self):
        if not self.k_target > 0:
            raise DomainError(f"k_target must be positive, got {self.k_target}")
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")


def clamp_k(k: float) -> float:
    """Clamp a growth rate into (0, K_MAX]."""
    return min(max(k, K_MIN), K_MAX)


def sigmoid(z):
    """``1 / (1 + exp(-z))`` without overflow and with full relative accuracy in both tails."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic_cc(t, params: GrowthParams):
    """Canopy cover at day ``t`` (scalar or array) on the logistic curve."""
    out = params.cc_max * sigmoid(params.k * (np.asarray(t, dtype=float) - params.t0))
    return float(out) if np.ndim(out) == 0 else out


def inverse_logistic(cc: float, params: GrowthParams) -> float:
    """Day at which the curve reaches cover ``cc``; requires 0 < cc < cc_max."""
    if not (0.0 < cc < params.cc_max):
        raise DomainError(f"cc must be in (0, {params.cc_max}), got {cc}")
    return params.t0 - math.log(params.cc_max / cc - 1.0) / params.k


def reward(k: float, cfg: RewardConfig) -> float:
    """Quadratic penalty for deviating from the target growth rate (always <= 0)."""
    d = k - cfg.k_target
    return -cfg.scale * d * d
