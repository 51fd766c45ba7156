"""Bounded least-squares fitting of the logistic growth curve.

The solver itself lives in :func:`plantgrowth._kernels.lm_logistic`; this
module handles input validation, default initialisation, the rolling
sub-batch fits, and the fit-report CSV.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import K_MAX, K_MIN, GrowthParams, logistic_cc

MAX_ITER = 200
GTOL = 1e-10
XTOL = 1e-12
LAMBDA0 = 1e-3
FIRST_ROLLING_DAY = 5
DEFAULT_K = 0.2

FIT_REPORT_HEADER = ["batch_id", "t", "cc_max", "k", "t0", "rss", "converged"]


class FitError(ValueError):
    pass


class InsufficientDataError(FitError):
    pass


class DegenerateDataError(FitError):
    pass


class NotConvergedError(FitError):
    pass


@dataclass(frozen=True)
class Bounds:
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    @classmethod
    def default(cls, max_day: float) -> "Bounds":
        # cc is a fraction so cc_max <= 1; t0 may sit past the observed window
        return cls(lower=(1e-6, K_MIN, 0.0), upper=(1.0, K_MAX, min(max(2.0 * max_day, 1.0), 100.0)))


@dataclass
class FitResult:
    params: GrowthParams
    rss: float
    n_points: int
    converged: bool
    iterations: int
    rss_history: np.ndarray = field(default=None, repr=False, compare=False)


@dataclass
class RollingFitSeries:
    batch_id: str
    entries: list[tuple[int, FitResult]]

    def at(self, t: int) -> FitResult:
        idx = t - self.entries[0][0]
        if idx < 0 or idx >= len(self.entries) or self.entries[idx][0] != t:
            raise KeyError(t)
        return self.entries[idx][1]


def default_init(days: np.ndarray, cc: np.ndarray) -> GrowthParams:
    """Data-driven start: observed max cover, day of half-max cover, k=0.2."""
    cc_max = float(min(max(cc.max(), 1e-6), 1.0))
    half = np.nonzero(cc >= 0.5 * cc.max())[0]
    t0 = float(days[half[0]]) if half.size else float(days[-1])
    return GrowthParams(cc_max=cc_max, k=DEFAULT_K, t0=min(max(t0, 0.0), 100.0))


def _as_arrays(series) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("series must be a sequence of (day, cc) pairs")
    return np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1])


def fit_logistic(series, bounds: Bounds | None = None, init: GrowthParams | None = None) -> FitResult:
    """Fit ``cc_max, k, t0`` to ``(day, cc)`` pairs by bounded Levenberg-Marquardt.

    Raises :class:`InsufficientDataError` for fewer than three points and
    :class:`DegenerateDataError` when every cover value is identical.
    """
    days, cc = _as_arrays(series)
    if days.size < 3:
        raise InsufficientDataError(f"need at least 3 points, got {days.size}")
    if np.all(cc == cc[0]):
        raise DegenerateDataError("all cover values are identical; k is unidentifiable")
    if bounds is None:
        bounds = Bounds.default(float(days.max()))
    if init is None:
        init = default_init(days, cc)
    lower = np.array(bounds.lower, dtype=float)
    upper = np.array(bounds.upper, dtype=float)
    p, rss, iters, converged, hist = _kernels.lm_logistic(
        days, cc, init.as_array(), lower, upper, MAX_ITER, GTOL, XTOL, LAMBDA0
    )
    params = GrowthParams(cc_max=float(p[0]), k=float(p[1]), t0=float(p[2]))
    return FitResult(params, float(rss), int(days.size), bool(converged), int(iters), hist)


def rolling_fits(batch) -> RollingFitSeries:
    """Fit days ``0..t`` for every ``t`` from day 5 to the last recorded day.

    Each fit is warm-started from the previous one; the first uses
    :func:`default_init`.
    """
    days = np.array([d.day for d in batch.days], dtype=float)
    cc = np.array([d.cc for d in batch.days], dtype=float)
    if len(days) < FIRST_ROLLING_DAY + 1:
        raise InsufficientDataError(
            f"batch {batch.batch_id}: need at least {FIRST_ROLLING_DAY + 1} days, got {len(days)}"
        )
    entries = []
    prev = None
    for t in range(FIRST_ROLLING_DAY, int(days[-1]) + 1):
        n = t + 1
        init = None
        if prev is not None:
            # the previous t0 may exceed this window's tighter t0 bound
            p = prev.params
            init = GrowthParams(p.cc_max, p.k, min(p.t0, 2.0 * days[n - 1], 100.0))
        fit = fit_logistic(np.column_stack([days[:n], cc[:n]]), init=init)
        entries.append((t, fit))
        prev = fit
    return RollingFitSeries(batch.batch_id, entries)


def extrapolate_next_day(fit: FitResult, t: float) -> float:
    """Cover predicted for day ``t + 1`` by a converged fit."""
    if not fit.converged:
        raise NotConvergedError("refusing to extrapolate from a non-converged fit")
    return logistic_cc(t + 1, fit.params)


def write_fit_report(series_list, out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(FIT_REPORT_HEADER)
    for series in series_list:
        for t, fit in series.entries:
            p = fit.params
            writer.writerow([series.batch_id, t, repr(p.cc_max), repr(p.k), repr(p.t0),
                             repr(fit.rss), str(fit.converged).lower()])


def read_fit_report(text: str) -> dict[str, RollingFitSeries]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != FIT_REPORT_HEADER:
        raise FitError(f"fit report header must be {FIT_REPORT_HEADER}, got {reader.fieldnames}")
    out: dict[str, RollingFitSeries] = {}
    for row in reader:
        fit = FitResult(
            GrowthParams(float(row["cc_max"]), float(row["k"]), float(row["t0"])),
            float(row["rss"]), int(row["t"]) + 1, row["converged"] == "true", 0,
        )
        out.setdefault(row["batch_id"], RollingFitSeries(row["batch_id"], [])).entries.append(
            (int(row["t"]), fit)
        )
    return out
