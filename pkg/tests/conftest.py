from __future__ import annotations

import numpy as np
import pytest

from plantgrowth import ingest
from plantgrowth.curvefit import rolling_fits
from plantgrowth.envmodel import FeatureConfig, build_features, make_bins, train_growth_model
from plantgrowth.envmodel.features import feature_names
from plantgrowth.envmodel.model import FeatureSpec, TrainedGrowthModel
from plantgrowth.envmodel.regressors import LinearModel
from plantgrowth.sim import EnvStats

ORACLE_SEED = 11
ORACLE_FEATURES = FeatureConfig(ma_windows=(2, 3, 4, 5, 6))


def fixed_model(value: float = 0.0, target_kind: str = "delta_k", delta_k_max: float = 0.02,
                k_max: float = 0.4, binning: str = "none") -> TrainedGrowthModel:
    """Hand-built model whose regressor ignores the features and returns ``value``.

    With ``target_kind="delta_k"`` and ``value=0`` it predicts k_hat = k_t.
    """
    config = FeatureConfig(target_kind=target_kind)
    names = tuple(feature_names(config))
    scheme = make_bins(binning)
    reg = LinearModel(np.zeros(len(names)), value)
    spec = FeatureSpec(names, np.zeros(len(names)), np.ones(len(names)))
    return TrainedGrowthModel("linear", {}, scheme, [reg] * len(scheme), config, spec, delta_k_max, k_max)


def default_stats() -> EnvStats:
    mean = np.array(ingest.DEFAULT_ENV_MEAN)
    sd = np.array(ingest.DEFAULT_ENV_SD) * 2
    return EnvStats(mean, sd, mean - 3 * sd, mean + 3 * sd)


@pytest.fixture
def stats() -> EnvStats:
    return default_stats()


@pytest.fixture(scope="session")
def oracle_batches():
    return ingest.generate_synthetic_batches(ingest.SyntheticGroundTruth(), 30, 31, seed=ORACLE_SEED)


@pytest.fixture(scope="session")
def oracle_rows(oracle_batches):
    rows = []
    for b in oracle_batches:
        rows += build_features(b, rolling_fits(b), ORACLE_FEATURES)
    return rows


@pytest.fixture(scope="session")
def oracle_model(oracle_rows):
    return train_growth_model(oracle_rows, "polynomial", "none", ORACLE_FEATURES)


@pytest.fixture(scope="session")
def oracle_stats(oracle_batches):
    return EnvStats.from_batches(oracle_batches)


# acceptance lines are collected here and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
