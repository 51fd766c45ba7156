"""The five regressor families, written against plain numpy arrays.

Inputs are already standardised by the caller. Each regressor exposes
``predict(x)`` and round-trips through ``to_dict``/``regressor_from_dict``.
"""
from __future__ import annotations

import numpy as np

from .. import _kernels
from .._accel import USE_NUMBA

FAMILIES = ("linear", "huber", "polynomial", "knn", "linear_svr")
DISPLAY_NAMES = {
    "linear": "Linear Regression",
    "huber": "Huber Regressor",
    "polynomial": "Polynomial Regressor",
    "knn": "K-Nearest Neighbors",
    "linear_svr": "Support Vector Machine",
}
DEFAULT_HYPER = {
    "linear": {"ridge": 1e-8},
    "huber": {"delta": 1.35, "max_iter": 100, "ridge": 1e-8},
    "polynomial": {"degrees": [1, 2, 3, 4], "val_fraction": 0.2, "ridge": 1e-8, "seed": 0},
    "knn": {"n_neighbors": 5},
    "linear_svr": {"epsilon": 0.01, "c": 1.0, "epochs": 500, "lr": 1e-3, "seed": 0},
}


class UnderDeterminedError(ValueError):
    pass


def _lstsq(x, y, ridge, weights=None):
    """Weighted least squares with an unpenalised intercept."""
    if weights is None:
        weights = np.ones(len(y))
    wsum = weights.sum()
    xm = weights @ x / wsum
    ym = weights @ y / wsum
    xc = x - xm
    yc = y - ym
    a = xc.T @ (weights[:, None] * xc) + ridge * np.eye(x.shape[1])
    coef = np.linalg.solve(a, xc.T @ (weights * yc))
    return coef, float(ym - xm @ coef)


def _check_rows(x, n_cols, family):
    if x.shape[0] == 0:
        raise UnderDeterminedError(f"{family}: no training rows")
    if x.shape[0] < n_cols:
        raise UnderDeterminedError(f"{family}: {x.shape[0]} rows for {n_cols} coefficients")


class LinearModel:
    family = "linear"

    def __init__(self, coef, intercept):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)

    def predict(self, x):
        return x @ self.coef + self.intercept

    def to_dict(self):
        return {"family": self.family, "coef": self.coef.tolist(), "intercept": self.intercept}


class HuberModel(LinearModel):
    family = "huber"


def fit_linear(x, y, ridge=1e-8) -> LinearModel:
    _check_rows(x, x.shape[1], "linear")
    return LinearModel(*_lstsq(x, y, ridge))


def fit_huber(x, y, delta=1.35, max_iter=100, ridge=1e-8) -> HuberModel:
    """Huber M-estimate by iteratively reweighted least squares.

    Residuals are measured in units of their MAD-based scale, re-estimated
    every iteration.
    """
    _check_rows(x, x.shape[1], "huber")
    coef, b = _lstsq(x, y, ridge)
    for _ in range(max_iter):
        r = y - x @ coef - b
        scale = np.median(np.abs(r - np.median(r))) / 0.6744897501960817
        if scale < 1e-12:
            break
        u = np.abs(r) / scale
        w = np.where(u <= delta, 1.0, delta / np.maximum(u, 1e-300))
        new_coef, new_b = _lstsq(x, y, ridge, w)
        change = np.max(np.abs(new_coef - coef)) + abs(new_b - b)
        coef, b = new_coef, new_b
        if change < 1e-12:
            break
    return HuberModel(coef, b)


def poly_expand(x, degree):
    """Per-feature powers 1..degree (no cross terms)."""
    return np.concatenate([x ** p for p in range(1, degree + 1)], axis=1)


class PolynomialModel:
    family = "polynomial"

    def __init__(self, degree, coef, intercept, val_mse=None):
        self.degree = int(degree)
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        self.val_mse = val_mse

    def predict(self, x):
        return poly_expand(x, self.degree) @ self.coef + self.intercept

    def to_dict(self):
        return {"family": self.family, "degree": self.degree, "coef": self.coef.tolist(),
                "intercept": self.intercept, "val_mse": self.val_mse}


def fit_polynomial(x, y, degrees=(1, 2, 3, 4), val_fraction=0.2, ridge=1e-8, seed=0) -> PolynomialModel:
    """Pick the degree by hold-out MSE on a shard of the rows, then refit on all rows.

    Among degrees whose validation MSE is within 1% (plus 1e-12) of the best,
    the lowest degree wins.
    """
    n, d = x.shape
    _check_rows(x, d, "polynomial")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    val, fit = perm[:n_val], perm[n_val:]
    scores = {}
    for deg in degrees:
        if len(fit) < d * deg:
            continue
        coef, b = _lstsq(poly_expand(x[fit], deg), y[fit], ridge)
        resid = poly_expand(x[val], deg) @ coef + b - y[val]
        scores[deg] = float(np.mean(resid ** 2))
    if not scores:
        raise UnderDeterminedError(f"polynomial: {n} rows too few for any candidate degree")
    best = min(scores.values())
    degree = min(deg for deg, s in scores.items() if s <= best * 1.01 + 1e-12)
    coef, b = _lstsq(poly_expand(x, degree), y, ridge)
    return PolynomialModel(degree, coef, b, scores[degree])


class KNNModel:
    family = "knn"

    def __init__(self, x, y, n_neighbors=5):
        self.x = np.ascontiguousarray(x, dtype=float)
        self.y = np.ascontiguousarray(y, dtype=float)
        self.n_neighbors = int(n_neighbors)

    def predict(self, x):
        x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
        if USE_NUMBA:
            return _kernels.knn_predict(self.x, self.y, x, self.n_neighbors)
        return _kernels.knn_predict_np(self.x, self.y, x, self.n_neighbors)

    def to_dict(self):
        return {"family": self.family, "n_neighbors": self.n_neighbors,
                "x": self.x.tolist(), "y": self.y.tolist()}


def fit_knn(x, y, n_neighbors=5) -> KNNModel:
    if x.shape[0] == 0:
        raise UnderDeterminedError("knn: no training rows")
    return KNNModel(x, y, n_neighbors)


class LinearSVRModel(LinearModel):
    family = "linear_svr"


def svr_sgd_np(x, y, order, epsilon, c, epochs, lr):
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    reg = 1.0 / (c * n)
    for e in range(epochs):
        for i in order[e]:
            resid = y[i] - (x[i] @ w + b)
            s = 1.0 if resid > epsilon else (-1.0 if resid < -epsilon else 0.0)
            w -= lr * (reg * w - s * x[i])
            b += lr * s
    return w, b


def fit_linear_svr(x, y, epsilon=0.01, c=1.0, epochs=500, lr=1e-3, seed=0) -> LinearSVRModel:
    if x.shape[0] == 0:
        raise UnderDeterminedError("linear_svr: no training rows")
    rng = np.random.default_rng(seed)
    order = np.stack([rng.permutation(x.shape[0]) for _ in range(epochs)])
    xc = np.ascontiguousarray(x, dtype=float)
    yc = np.ascontiguousarray(y, dtype=float)
    solver = _kernels.svr_sgd if USE_NUMBA else svr_sgd_np
    w, b = solver(xc, yc, order, float(epsilon), float(c), int(epochs), float(lr))
    return LinearSVRModel(w, b)


_FITTERS = {
    "linear": fit_linear,
    "huber": fit_huber,
    "polynomial": fit_polynomial,
    "knn": fit_knn,
    "linear_svr": fit_linear_svr,
}


def train_regressor(x, y, family: str, hyper: dict | None = None):
    """Fit one regressor of ``family`` on standardised features ``x``."""
    if family not in _FITTERS:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    params = dict(DEFAULT_HYPER[family])
    unknown = set(hyper or {}) - set(params)
    if unknown:
        raise ValueError(f"{family}: unknown hyperparameters {sorted(unknown)}")
    params.update(hyper or {})
    if family == "polynomial":
        params["degrees"] = tuple(params["degrees"])
    return _FITTERS[family](np.asarray(x, dtype=float), np.asarray(y, dtype=float), **params)


def regressor_from_dict(obj: dict):
    family = obj["family"]
    if family in ("linear", "huber", "linear_svr"):
        cls = {"linear": LinearModel, "huber": HuberModel, "linear_svr": LinearSVRModel}[family]
        return cls(obj["coef"], obj["intercept"])
    if family == "polynomial":
        return PolynomialModel(obj["degree"], obj["coef"], obj["intercept"], obj.get("val_mse"))
    if family == "knn":
        return KNNModel(np.asarray(obj["x"], dtype=float).reshape(len(obj["y"]), -1), obj["y"], obj["n_neighbors"])
    raise ValueError(f"unknown family {family!r}")
