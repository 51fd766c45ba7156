from __future__ import annotations

import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import ORACLE_FEATURES, fixed_model
from plantgrowth.curvefit import FitResult, RollingFitSeries
from plantgrowth.core import GrowthParams
from plantgrowth.envmodel import (BenchmarkRow, BenchmarkTable, FeatureConfig, FeatureRow, SelectionError,
                                  assign_rows_to_bins, benchmark_grid, build_features, feature_names,
                                  feature_vector, load_model, make_bins, metrics, predict_k, save_model,
                                  select_best, select_bin, split_train_test, train_growth_model, train_regressor)
from plantgrowth.envmodel.benchmark import Split
from plantgrowth.envmodel.model import ModelError, TrainedGrowthModel
from plantgrowth.envmodel.regressors import FAMILIES, UnderDeterminedError, fit_huber, fit_linear
from plantgrowth.ingest import SyntheticGroundTruth, generate_synthetic_batches


def row(cc, batch="b", t=5, features=(0.0,), target=0.1):
    return FeatureRow(batch, t, np.asarray(features, dtype=float), cc, 0.2, 0.2 + target, target)


def fake_fits(batch_id, last, k=lambda t: 0.2 + 0.001 * t):
    return RollingFitSeries(batch_id, [(t, FitResult(GrowthParams(1.0, k(t), 15.0), 0.0, t + 1, True, 1))
                                       for t in range(5, last + 1)])


class TestFeatures:
    @pytest.fixture
    def batch(self):
        return generate_synthetic_batches(SyntheticGroundTruth(), 1, 31, seed=0)[0]

    def test_env_only_counts(self, batch):
        rows = build_features(batch, fake_fits(batch.batch_id, 30), FeatureConfig())
        assert len(rows) == 25 and all(r.features.shape == (7,) for r in rows)
        assert [r.t for r in rows] == list(range(5, 30))
        np.testing.assert_array_equal(rows[0].features, batch.env_matrix()[5])

    def test_k_passthrough_and_target(self, batch):
        fits = fake_fits(batch.batch_id, 30, k=lambda t: 0.2 if t == 5 else 0.25)
        rows = build_features(batch, fits, FeatureConfig(include_k=True))
        names = feature_names(FeatureConfig(include_k=True))
        assert rows[0].features[names.index("k")] == 0.2
        assert rows[0].target == 0.25
        drows = build_features(batch, fits, FeatureConfig(include_k=True, target_kind="delta_k"))
        assert drows[0].target == pytest.approx(0.05)

    def test_moving_average(self):
        hist = np.tile(np.arange(7.0), (3, 1))
        hist[:, 5] = [6.0, 6.2, 6.4]
        cfg = FeatureConfig(ma_windows=(3,))
        vec = feature_vector(hist, 0.2, cfg)
        assert vec[feature_names(cfg).index("ph_ma3")] == pytest.approx(6.2, abs=1e-15)

    def test_short_history_uses_prefix(self):
        hist = np.tile(np.arange(7.0), (2, 1))
        hist[:, 5] = [6.0, 6.4]
        cfg = FeatureConfig(ma_windows=(6,))
        assert feature_vector(hist, 0.2, cfg)[feature_names(cfg).index("ph_ma6")] == pytest.approx(6.2)

    def test_layout(self):
        cfg = FeatureConfig(include_k=True, include_interactions=True, ma_windows=(2, 3))
        hist = np.random.default_rng(0).normal(size=(4, 7))
        vec = feature_vector(hist, 0.3, cfg)
        assert vec.shape == (len(feature_names(cfg)),) == (7 + 1 + 7 + 14,)
        np.testing.assert_allclose(vec[8:15], 0.3 * hist[-1])

    @pytest.mark.parametrize("kw", [dict(ma_windows=(1,)), dict(ma_windows=(7,)), dict(target_kind="dk")])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            FeatureConfig(**kw)


class TestBinning:
    def test_sequential(self):
        s = make_bins("sequential")
        got = [(b.lower, b.upper) for b in s.bins]
        np.testing.assert_allclose(got, [(0.05, 0.2875), (0.2875, 0.525), (0.525, 0.7625), (0.7625, 1.0)],
                                   atol=1e-15)
        assert s.bins[-1].upper == 1.0

    def test_overlapping(self):
        s = make_bins("overlapping")
        assert len(s) == 15
        assert s.bins[0].center == 0.05 and s.bins[0].lower == 0.05
        assert s.bins[0].upper == pytest.approx(0.24, abs=1e-15)
        assert s.bins[-1].upper == 1.0 and s.bins[-1].lower == pytest.approx(0.81)
        assert all(0.05 <= b.lower < b.upper <= 1.0 for b in s.bins)

    def test_none(self):
        (b,) = make_bins("none").bins
        assert (b.lower, b.upper, b.center) == (0.05, 1.0, 0.525)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_bins("quantile")

    def test_assignment(self):
        seq = make_bins("sequential")
        per_bin, _ = assign_rows_to_bins([row(0.10), row(1.0), row(0.01)], seq)
        assert [len(p) for p in per_bin] == [1, 0, 0, 1]
        assert per_bin[0][0].cc_t == 0.10 and per_bin[3][0].cc_t == 1.0

    def test_overlapping_membership(self):
        centers = np.linspace(0.05, 1, 15)
        expected = [i for i, c in enumerate(centers) if max(c - 0.19, 0.05) <= 0.30 < min(c + 0.19, 1.0)]
        per_bin, _ = assign_rows_to_bins([row(0.30)], make_bins("overlapping"))
        assert [i for i, p in enumerate(per_bin) if p] == expected
        assert len(expected) > 1

    def test_sparse_flags(self):
        rows = [row(0.1)] * 5 + [row(0.4)] * 4
        _, sparse = assign_rows_to_bins(rows, make_bins("sequential"))
        assert sparse == [False, True, True, True]

    def test_select(self):
        seq = make_bins("sequential")
        assert select_bin(seq, 0.10) == 0
        assert select_bin(make_bins("none"), 0.99) == 0
        midway = (seq.bins[0].center + seq.bins[1].center) / 2
        assert select_bin(seq, midway) == 0

    def test_scheme_dict_roundtrip(self):
        s = make_bins("overlapping")
        assert type(s).from_dict(json.loads(json.dumps(s.to_dict()))) == s


class TestRegressors:
    def test_exact_linear(self):
        x = np.linspace(-1, 1, 20)[:, None]
        m = train_regressor(x, 2 * x[:, 0] + 1, "linear")
        assert m.coef[0] == pytest.approx(2, abs=1e-8) and m.intercept == pytest.approx(1, abs=1e-8)
        assert np.mean((m.predict(x) - (2 * x[:, 0] + 1)) ** 2) < 1e-16

    def test_linear_multivariate(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(200, 5))
        w = rng.normal(size=5)
        m = train_regressor(x, x @ w - 0.4, "linear")
        np.testing.assert_allclose(m.coef, w, atol=1e-8)
        xt = rng.normal(size=(50, 5))
        assert np.mean((m.predict(xt) - (xt @ w - 0.4)) ** 2) <= 1e-12

    def test_knn_exact_hit(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(30, 3)), rng.normal(size=30)
        m = train_regressor(x, y, "knn", {"n_neighbors": 1})
        assert m.predict(x[7:8])[0] == y[7]

    def test_knn_mean_of_five(self):
        x = np.arange(10.0)[:, None]
        y = np.arange(10.0) * 2
        assert train_regressor(x, y, "knn").predict(np.array([[4.1]]))[0] == pytest.approx(8.0)

    def test_polynomial_degree_two(self):
        x = np.linspace(-1, 1, 50)[:, None]
        m = train_regressor(x, x[:, 0] ** 2, "polynomial")
        assert m.degree == 2 and m.val_mse < 1e-10

    def test_polynomial_prefers_lowest(self):
        x = np.linspace(-1, 1, 50)[:, None]
        assert train_regressor(x, 3 * x[:, 0], "polynomial").degree == 1

    def test_huber_matches_linear_exact(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(500, 3))
        y = x @ np.array([0.5, -0.2, 0.1]) + 0.3
        a, b = fit_linear(x, y), fit_huber(x, y)
        np.testing.assert_allclose(b.coef, a.coef, atol=1e-6)
        assert abs(a.intercept - b.intercept) < 1e-6

    def test_huber_close_to_linear_on_gaussian_noise(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(500, 3))
        y = x @ np.array([0.5, -0.2, 0.1]) + 0.3 + rng.normal(0, 0.01, 500)
        a, b = fit_linear(x, y), fit_huber(x, y)
        # both estimate the same line; they differ by sampling noise of order sigma/sqrt(n)
        np.testing.assert_allclose(b.coef, a.coef, atol=1e-3)

    def test_huber_resists_outliers(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(200, 1))
        y = 2 * x[:, 0] + rng.normal(0, 0.01, 200)
        y[:10] += 5.0
        assert abs(fit_huber(x, y).coef[0] - 2) < abs(fit_linear(x, y).coef[0] - 2)

    def test_svr_recovers_line(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(200, 2))
        y = x @ np.array([0.3, -0.1]) + 0.05
        m = train_regressor(x, y, "linear_svr")
        np.testing.assert_allclose(m.coef, [0.3, -0.1], atol=0.02)

    @pytest.mark.parametrize("family", ["linear", "polynomial"])
    def test_under_determined(self, family):
        with pytest.raises(UnderDeterminedError):
            train_regressor(np.ones((2, 5)), np.ones(2), family)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            train_regressor(np.ones((5, 1)), np.ones(5), "forest")


class TestMetrics:
    def test_perfect(self):
        assert metrics([1.0, 2.0, 4.0], [1.0, 2.0, 4.0]) == (1.0, 0.0)

    def test_hand_case(self):
        r2, mse = metrics([0, 1, 2], [0, 1, 1])
        assert r2 == pytest.approx(0.5, abs=1e-12) and mse == pytest.approx(1 / 3, abs=1e-12)

    def test_against_fractions(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            yt, yp = rng.normal(size=5), rng.normal(size=5)
            ft, fp = [Fraction(v) for v in yt], [Fraction(v) for v in yp]
            mean = sum(ft) / 5
            ss_res = sum((a - b) ** 2 for a, b in zip(ft, fp))
            ss_tot = sum((a - mean) ** 2 for a in ft)
            r2, mse = metrics(yt, yp)
            assert abs(r2 - float(1 - ss_res / ss_tot)) < 1e-12
            assert abs(mse - float(ss_res / 5)) < 1e-12

    def test_constant_truth(self):
        r2, mse = metrics([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
        assert math.isnan(r2) and mse == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics([1.0], [1.0, 2.0])


class TestSplit:
    def rows(self, n_batches, per=10):
        return [row(0.5, batch=f"b{b:02d}", t=t) for b in range(n_batches) for t in range(per)]

    def test_ten_batches(self):
        s = split_train_test(self.rows(10), 0.8, seed=0)
        assert len({r.batch_id for r in s.train}) == 8 and len({r.batch_id for r in s.test}) == 2
        assert not {r.batch_id for r in s.train} & {r.batch_id for r in s.test}
        assert s.by_batch

    def test_deterministic(self):
        a, b = split_train_test(self.rows(10), seed=3), split_train_test(self.rows(10), seed=3)
        assert [r.batch_id for r in a.test] == [r.batch_id for r in b.test]

    def test_thirty_batches(self):
        for seed in range(5):
            s = split_train_test(self.rows(30), seed=seed)
            assert 0.77 <= len(s.train) / 300 <= 0.83

    def test_single_batch(self):
        s = split_train_test(self.rows(1, 20), seed=0)
        assert not s.by_batch and len(s.train) == 16 and max(r.t for r in s.train) < min(r.t for r in s.test)

    def test_too_few(self):
        with pytest.raises(ValueError):
            split_train_test(self.rows(1, 4))


TABLE1 = [
    ("huber", "overlapping", 0.704392, 0.008783), ("huber", "sequential", 0.758954, 0.007161),
    ("huber", "none", 0.503647, 0.005309), ("linear", "overlapping", 0.988588, 0.000354),
    ("linear", "sequential", 0.989152, 0.001132), ("linear", "none", 0.988169, 0.000487),
    ("polynomial", "overlapping", 0.733265, 0.009973), ("polynomial", "sequential", 0.792810, 0.006454),
    ("polynomial", "none", 0.629016, 0.014098), ("knn", "overlapping", 0.848751, 0.004200),
    ("knn", "sequential", 0.795600, 0.005350), ("knn", "none", 0.911697, 0.003541),
    ("linear_svr", "overlapping", 0.681001, 0.006655), ("linear_svr", "sequential", 0.638616, 0.006822),
    ("linear_svr", "none", 0.863949, 0.003802),
]


class TestSelection:
    table = BenchmarkTable([BenchmarkRow(*r) for r in TABLE1])

    def test_published_mse(self):
        best = select_best(self.table, "mse")
        assert (best.family, best.binning, best.mse) == ("linear", "overlapping", 0.000354)

    def test_published_r2(self):
        best = select_best(self.table, "r2")
        assert (best.family, best.binning, best.r2) == ("linear", "sequential", 0.989152)

    def test_single_row(self):
        only = BenchmarkRow("knn", "none", 0.1, 0.2)
        assert select_best(BenchmarkTable([only])) is only

    def test_exhaustive_argmin(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            rows = [BenchmarkRow(f, b, 0.0, float(rng.integers(0, 4))) for f, b, _, _ in TABLE1]
            best = select_best(BenchmarkTable(rows))
            assert best.mse == min(r.mse for r in rows)
            assert best is next(r for r in sorted(rows, key=lambda r: (FAMILIES.index(r.family),
                                ("none", "sequential", "overlapping").index(r.binning))) if r.mse == best.mse)

    def test_failed_cells_skipped(self):
        rows = [BenchmarkRow("linear", "none", math.nan, math.nan, "boom"), BenchmarkRow("knn", "none", 0.2, 0.3)]
        assert select_best(BenchmarkTable(rows)).family == "knn"
        with pytest.raises(SelectionError):
            select_best(BenchmarkTable(rows[:1]))

    def test_csv(self):
        buf = io.StringIO()
        rows = [BenchmarkRow("linear", "none", 0.5, 0.1), BenchmarkRow("knn", "none", math.nan, math.nan, "x")]
        BenchmarkTable(rows).write_csv(buf)
        assert buf.getvalue().splitlines() == ["family,binning,r2,mse", "linear,none,0.5,0.1", "knn,none,error,error"]


class TestTrainedModel:
    def test_roundtrip(self, oracle_rows, tmp_path):
        for family in FAMILIES:
            model = train_growth_model(oracle_rows[:300], family, "sequential", ORACLE_FEATURES)
            save_model(model, tmp_path / "m.json")
            obj = json.loads((tmp_path / "m.json").read_text())
            assert set(obj) >= {"version", "family", "hyper", "target_kind", "feature_spec", "scheme", "per_bin",
                                "norm"}
            back = load_model(tmp_path / "m.json")
            np.testing.assert_array_equal(back.predict_rows(oracle_rows[300:]), model.predict_rows(oracle_rows[300:]))
            assert back.norm == model.norm

    def test_bad_version(self, tmp_path):
        obj = fixed_model().to_dict()
        obj["version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(obj))
        with pytest.raises(ModelError):
            load_model(tmp_path / "m.json")

    def test_norm_constants(self, oracle_rows):
        model = train_growth_model(oracle_rows, "linear", "none", ORACLE_FEATURES)
        used = [r for r in oracle_rows if r.cc_t >= 0.05]
        assert model.delta_k_max == max(abs(r.k_next - r.k_t) for r in used)
        assert model.k_max == max(max(r.k_t, r.k_next) for r in used)
        assert np.all(model.feature_spec.sds > 0)

    def test_predict_k_contract(self, oracle_model, oracle_rows):
        r = oracle_rows[10]
        k = predict_k(oracle_model, r.features, r.cc_t)
        assert 0 < k <= 5
        with pytest.raises(ModelError):
            predict_k(oracle_model, r.features[:-1], r.cc_t)

    def test_delta_k_model_adds_current(self):
        m = fixed_model(0.05, "delta_k")
        assert predict_k(m, np.zeros(7), 0.3, k_now=0.2) == pytest.approx(0.25)
        with pytest.raises(ModelError):
            predict_k(m, np.zeros(7), 0.3)

    def test_prediction_clamped(self):
        assert predict_k(fixed_model(9.0, "k"), np.zeros(7), 0.3) == 5.0
        assert predict_k(fixed_model(-1.0, "k"), np.zeros(7), 0.3) > 0

    def test_bin_routing(self):
        m = fixed_model(0.0, "k", binning="sequential")
        from plantgrowth.envmodel.regressors import LinearModel
        m.per_bin = [LinearModel(np.zeros(7), 0.1 * (i + 1)) for i in range(4)]
        assert predict_k(m, np.zeros(7), 0.10) == pytest.approx(0.1)
        assert predict_k(m, np.zeros(7), 0.9) == pytest.approx(0.4)

    @pytest.mark.parametrize("family", ["linear", "knn", "polynomial"])
    def test_affine_rescaling_invariance(self, oracle_rows, family):
        rows = oracle_rows[:400]
        scaled = [FeatureRow(r.batch_id, r.t, r.features * 3.0 - 7.0, r.cc_t, r.k_t, r.k_next, r.target)
                  for r in rows]
        a = train_growth_model(rows, family, "none", ORACLE_FEATURES)
        b = train_growth_model(scaled, family, "none", ORACLE_FEATURES)
        for r, s in zip(oracle_rows[400:420], [x.features * 3.0 - 7.0 for x in oracle_rows[400:420]]):
            assert predict_k(a, r.features, r.cc_t) == pytest.approx(predict_k(b, s, r.cc_t), abs=1e-9)

    @pytest.mark.parametrize("binning", ["sequential", "overlapping"])
    def test_binning_never_hurts_in_sample(self, oracle_rows, binning):
        model = train_growth_model(oracle_rows, "linear", binning, ORACLE_FEATURES)
        whole = train_growth_model(oracle_rows, "linear", "none", ORACLE_FEATURES).per_bin[0]
        per_bin, _ = assign_rows_to_bins(oracle_rows, model.scheme)
        for i, subset in enumerate(per_bin):
            if i in model.fallback_bins or not subset:
                continue
            x = model.feature_spec.standardize(np.array([r.features for r in subset]))
            y = np.array([r.target for r in subset])
            own = np.mean((model.per_bin[i].predict(x) - y) ** 2)
            ref = np.mean((whole.predict(x) - y) ** 2)
            assert own <= ref + 1e-12

    def test_sparse_bins_fall_back(self, oracle_rows):
        few = [r for r in oracle_rows if r.cc_t < 0.3] + [r for r in oracle_rows if r.cc_t >= 0.3][:3]
        model = train_growth_model(few, "linear", "sequential", ORACLE_FEATURES)
        assert {2, 3} <= set(model.fallback_bins)
        assert model.per_bin[3] is model.per_bin[2]


class TestGrid:
    def test_shape_and_order(self, oracle_rows):
        split = split_train_test(oracle_rows, seed=0)
        table = benchmark_grid(split, ORACLE_FEATURES)
        assert len(table) == 15
        assert [(r.family, r.binning) for r in table.rows] == [(f, b) for f in FAMILIES
                                                                for b in ("none", "sequential", "overlapping")]
        assert all(not r.failed and r.r2 <= 1 and r.mse >= 0 for r in table.rows)

    def test_optimism(self, oracle_rows):
        split = split_train_test(oracle_rows, seed=0)
        held = benchmark_grid(split, ORACLE_FEATURES)
        same = benchmark_grid(Split(split.train, split.train, True), ORACLE_FEATURES)
        for h, s in zip(held.rows, same.rows):
            assert s.r2 >= h.r2, (h.family, h.binning)

    def test_failed_cell_recorded(self, oracle_rows):
        split = split_train_test(oracle_rows, seed=0)
        table = benchmark_grid(split, ORACLE_FEATURES, families=("linear",), binnings=("none",),
                               hyper={"linear": {"bogus": 1}})
        (cell,) = table.rows
        assert cell.failed and math.isnan(cell.mse)
