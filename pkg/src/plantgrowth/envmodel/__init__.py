"""Environment-conditioned growth-rate models: feature construction, plant-size
binning, regressor families, trained-model artifacts, and the benchmark grid."""

from .benchmark import BenchmarkRow, BenchmarkTable, SelectionError, benchmark_grid, metrics, select_best, split_train_test
from .binning import Bin, BinScheme, assign_rows_to_bins, make_bins, select_bin
from .features import FeatureConfig, FeatureRow, build_features, feature_names, feature_vector
from .model import ModelError, TrainedGrowthModel, load_model, predict_k, save_model, train_growth_model
from .regressors import FAMILIES, UnderDeterminedError, train_regressor

__all__ = [
    "BenchmarkRow", "BenchmarkTable", "SelectionError", "benchmark_grid", "metrics", "select_best", "split_train_test",
    "Bin", "BinScheme", "assign_rows_to_bins", "make_bins", "select_bin",
    "FeatureConfig", "FeatureRow", "build_features", "feature_names", "feature_vector",
    "ModelError", "TrainedGrowthModel", "load_model", "predict_k", "save_model", "train_growth_model",
    "FAMILIES", "UnderDeterminedError", "train_regressor",
]
