"""Trained growth-rate model: one regressor per plant-size bin."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..core import clamp_k
from .binning import BinScheme, assign_rows_to_bins, make_bins, select_bin
from .features import FeatureConfig, feature_names
from .regressors import DEFAULT_HYPER, UnderDeterminedError, regressor_from_dict, train_regressor

ARTIFACT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    names: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.means) / self.sds


@dataclass
class TrainedGrowthModel:
    family: str
    hyper: dict
    scheme: BinScheme
    per_bin: list
    feature_config: FeatureConfig
    feature_spec: FeatureSpec
    delta_k_max: float
    k_max: float
    fallback_bins: list[int] = field(default_factory=list)

    @property
    def target_kind(self) -> str:
        return self.feature_config.target_kind

    @property
    def norm(self) -> tuple[float, float]:
        return self.delta_k_max, self.k_max

    def predict_raw(self, features, cc_now: float) -> float:
        """Regressor output (in target units) of the bin nearest ``cc_now``."""
        features = np.asarray(features, dtype=float)
        if features.shape != (len(self.feature_spec.names),):
            raise ModelError(f"expected {len(self.feature_spec.names)} features, got shape {features.shape}")
        reg = self.per_bin[select_bin(self.scheme, cc_now)]
        return float(reg.predict(self.feature_spec.standardize(features)[None, :])[0])

    def predict_rows(self, rows) -> np.ndarray:
        """Target-unit predictions for feature rows, each routed by its own ``cc_t``."""
        x = self.feature_spec.standardize(np.array([r.features for r in rows]))
        idx = np.array([select_bin(self.scheme, r.cc_t) for r in rows])
        out = np.empty(len(rows))
        for b in np.unique(idx):
            sel = idx == b
            out[sel] = self.per_bin[b].predict(x[sel])
        return out

    def to_dict(self) -> dict:
        return {
            "version": ARTIFACT_VERSION,
            "family": self.family,
            "hyper": self.hyper,
            "target_kind": self.target_kind,
            "feature_config": self.feature_config.to_dict(),
            "feature_spec": {"names": list(self.feature_spec.names), "means": self.feature_spec.means.tolist(),
                             "sds": self.feature_spec.sds.tolist()},
            "scheme": self.scheme.to_dict(),
            "per_bin": [dict(reg.to_dict(), fallback=i in self.fallback_bins) for i, reg in enumerate(self.per_bin)],
            "norm": {"delta_k_max": self.delta_k_max, "k_max": self.k_max},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainedGrowthModel":
        if obj.get("version") != ARTIFACT_VERSION:
            raise ModelError(f"unsupported model artifact version {obj.get('version')!r}")
        spec = obj["feature_spec"]
        return cls(
            family=obj["family"],
            hyper=obj["hyper"],
            scheme=BinScheme.from_dict(obj["scheme"]),
            per_bin=[regressor_from_dict(r) for r in obj["per_bin"]],
            feature_config=FeatureConfig.from_dict(obj["feature_config"]),
            feature_spec=FeatureSpec(tuple(spec["names"]), np.asarray(spec["means"], dtype=float),
                                     np.asarray(spec["sds"], dtype=float)),
            delta_k_max=float(obj["norm"]["delta_k_max"]),
            k_max=float(obj["norm"]["k_max"]),
            fallback_bins=[i for i, r in enumerate(obj["per_bin"]) if r.get("fallback")],
        )


def in_range_rows(rows, scheme: BinScheme):
    lower = min(b.lower for b in scheme.bins)
    return [r for r in rows if r.cc_t >= lower]


def train_growth_model(rows, family: str, binning: str | BinScheme, config: FeatureConfig,
                       hyper: dict | None = None) -> TrainedGrowthModel:
    """Standardise on the training rows, fit a whole-data regressor and one per bin.

    Bins with fewer than five rows, or too few rows for the family, reuse the
    whole-data regressor and are listed in ``fallback_bins``.
    """
    scheme = make_bins(binning) if isinstance(binning, str) else binning
    rows = in_range_rows(rows, scheme)
    if not rows:
        raise ModelError("no training rows inside the binning range")
    x = np.array([r.features for r in rows])
    names = tuple(feature_names(config))
    if x.shape[1] != len(names):
        raise ModelError(f"rows carry {x.shape[1]} features but the config names {len(names)}")
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    sds[sds <= 0] = 1.0
    spec = FeatureSpec(names, means, sds)
    params = dict(DEFAULT_HYPER[family], **(hyper or {}))

    def fit(subset):
        xs = spec.standardize(np.array([r.features for r in subset]))
        return train_regressor(xs, np.array([r.target for r in subset]), family, params)

    whole = fit(rows)
    per_bin_rows, sparse = assign_rows_to_bins(rows, scheme)
    per_bin, fallback = [], []
    for i, (subset, few) in enumerate(zip(per_bin_rows, sparse)):
        if few:
            per_bin.append(whole)
            fallback.append(i)
            continue
        try:
            per_bin.append(fit(subset))
        except UnderDeterminedError:
            per_bin.append(whole)
            fallback.append(i)
    k_all = np.array([[r.k_t, r.k_next] for r in rows])
    return TrainedGrowthModel(
        family=family, hyper=params, scheme=scheme, per_bin=per_bin, feature_config=config,
        feature_spec=spec, delta_k_max=float(np.max(np.abs(k_all[:, 1] - k_all[:, 0]))),
        k_max=float(k_all.max()), fallback_bins=fallback,
    )


def predict_k(model: TrainedGrowthModel, features, cc_now: float, k_now: float | None = None) -> float:
    """Next-day growth rate from the bin nearest ``cc_now``, clamped to (0, 5].

    For delta-k models the prediction is added to ``k_now``.
    """
    pred = model.predict_raw(features, cc_now)
    if not np.isfinite(pred):
        raise ModelError(f"non-finite prediction {pred}")
    if model.target_kind == "delta_k":
        if k_now is None:
            raise ModelError("a delta_k model needs the current growth rate k_now")
        pred = k_now + pred
    return clamp_k(pred)


def save_model(model: TrainedGrowthModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> TrainedGrowthModel:
    with open(path) as fh:
        return TrainedGrowthModel.from_dict(json.load(fh))
