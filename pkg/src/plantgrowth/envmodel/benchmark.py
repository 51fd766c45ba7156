"""Train/test split, R2/MSE metrics, the family x binning grid, and selection."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .binning import KINDS
from .model import in_range_rows, train_growth_model
from .regressors import FAMILIES

CRITERIA = ("mse", "r2")


class SelectionError(ValueError):
    pass


def metrics(y_true, y_pred) -> tuple[float, float]:
    """``(r2, mse)``; r2 is NaN when ``y_true`` is constant."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("y_true and y_pred must be non-empty and equally long")
    resid = y_true - y_pred
    ss_res = math.fsum(resid * resid)
    dev = y_true - math.fsum(y_true) / y_true.size
    ss_tot = math.fsum(dev * dev)
    mse = ss_res / y_true.size
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return r2, mse


@dataclass
class Split:
    train: list
    test: list
    by_batch: bool


def split_train_test(rows, ratio: float = 0.8, seed: int = 0) -> Split:
    """Hold out whole batches so that the training share of rows is nearest ``ratio``.

    With a single batch the rows are cut into a leading training block and a
    trailing test block instead (``by_batch`` is False).
    """
    if len(rows) < 5:
        raise ValueError(f"need at least 5 rows to split, got {len(rows)}")
    ids = sorted({r.batch_id for r in rows})
    if len(ids) == 1:
        ordered = sorted(rows, key=lambda r: r.t)
        n_train = min(max(int(round(ratio * len(ordered))), 1), len(ordered) - 1)
        return Split(ordered[:n_train], ordered[n_train:], by_batch=False)
    perm = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    sizes = {}
    for r in rows:
        sizes[r.batch_id] = sizes.get(r.batch_id, 0) + 1
    cum = np.cumsum([sizes[b] for b in perm]) / len(rows)
    # at least one batch on each side
    n_train = 1 + int(np.argmin(np.abs(cum[:-1] - ratio)))
    train_ids = set(perm[:n_train])
    return Split([r for r in rows if r.batch_id in train_ids],
                 [r for r in rows if r.batch_id not in train_ids], by_batch=True)


@dataclass
class BenchmarkRow:
    family: str
    binning: str
    r2: float
    mse: float
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class BenchmarkTable:
    rows: list[BenchmarkRow]

    def __len__(self):
        return len(self.rows)

    def write_csv(self, out) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["family", "binning", "r2", "mse"])
        for row in self.rows:
            if row.failed:
                writer.writerow([row.family, row.binning, "error", "error"])
            else:
                writer.writerow([row.family, row.binning, repr(row.r2), repr(row.mse)])


def evaluate_model(model, rows) -> tuple[float, float]:
    rows = in_range_rows(rows, model.scheme)
    if not rows:
        raise ValueError("no test rows inside the binning range")
    return metrics([r.target for r in rows], model.predict_rows(rows))


def benchmark_grid(split: Split, config, families=FAMILIES, binnings=KINDS, hyper: dict | None = None,
                   keep_models: bool = False):
    """Train every (family, binning) cell on ``split.train`` and score it on ``split.test``.

    Metrics pool the test predictions of all bins. A failing cell is recorded
    with its error rather than aborting the grid. With ``keep_models`` the
    trained models are returned alongside the table, keyed by cell.
    """
    rows, models = [], {}
    for family in families:
        for binning in binnings:
            try:
                model = train_growth_model(split.train, family, binning, config, (hyper or {}).get(family))
                r2, mse = evaluate_model(model, split.test)
                rows.append(BenchmarkRow(family, binning, r2, mse))
                models[(family, binning)] = model
            except (ValueError, np.linalg.LinAlgError) as exc:
                rows.append(BenchmarkRow(family, binning, float("nan"), float("nan"), str(exc)))
    table = BenchmarkTable(rows)
    return (table, models) if keep_models else table


def select_best(table: BenchmarkTable, criterion: str = "mse") -> BenchmarkRow:
    """Smallest-MSE (or largest-R2) row; ties go to the earlier family, then binning."""
    if criterion not in CRITERIA:
        raise SelectionError(f"criterion must be one of {CRITERIA}")
    def rank(name, order):
        return order.index(name) if name in order else len(order)

    candidates = []
    for pos, row in enumerate(table.rows):
        score = row.mse if criterion == "mse" else -row.r2
        if row.failed or math.isnan(score):
            continue
        candidates.append((score, rank(row.family, FAMILIES), rank(row.binning, KINDS), pos, row))
    if not candidates:
        raise SelectionError("every benchmark cell failed; nothing to select")
    return min(candidates, key=lambda c: c[:4])[-1]
