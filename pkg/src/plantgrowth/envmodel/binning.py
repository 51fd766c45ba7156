"""Plant-size binning schemes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CC_LOWER = 0.05
CC_UPPER = 1.0
N_SEQUENTIAL = 4
N_OVERLAPPING = 15
OVERLAP_FRACTION = 0.40
MIN_BIN_ROWS = 5
KINDS = ("none", "sequential", "overlapping")


@dataclass(frozen=True)
class Bin:
    lower: float
    upper: float
    center: float

    def contains(self, cc: float) -> bool:
        if cc == CC_UPPER and self.upper == CC_UPPER:
            return True
        return self.lower <= cc < self.upper


@dataclass(frozen=True)
class BinScheme:
    kind: str
    bins: tuple[Bin, ...]

    def __len__(self):
        return len(self.bins)

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bins])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bins": [{"lower": b.lower, "upper": b.upper, "center": b.center}
                                            for b in self.bins]}

    @classmethod
    def from_dict(cls, obj: dict) -> "BinScheme":
        return cls(obj["kind"], tuple(Bin(float(b["lower"]), float(b["upper"]), float(b["center"]))
                                      for b in obj["bins"]))


def make_bins(kind: str) -> BinScheme:
    """Build a scheme over cover fractions [0.05, 1].

    ``sequential`` is four equal-width disjoint bins. ``overlapping`` places 15
    centres evenly over the range, each spanning +-0.19 (40% of the range)
    clipped to the range, so the outermost bins are narrower.
    """
    span = CC_UPPER - CC_LOWER
    if kind == "none":
        return BinScheme(kind, (Bin(CC_LOWER, CC_UPPER, CC_LOWER + span / 2),))
    if kind == "sequential":
        edges = CC_LOWER + span * np.arange(N_SEQUENTIAL + 1) / N_SEQUENTIAL
        edges[-1] = CC_UPPER
        return BinScheme(kind, tuple(Bin(float(lo), float(hi), float((lo + hi) / 2))
                                     for lo, hi in zip(edges[:-1], edges[1:])))
    if kind == "overlapping":
        half = OVERLAP_FRACTION * span / 2
        centers = np.linspace(CC_LOWER, CC_UPPER, N_OVERLAPPING)
        return BinScheme(kind, tuple(Bin(float(max(c - half, CC_LOWER)), float(min(c + half, CC_UPPER)), float(c))
                                     for c in centers))
    raise ValueError(f"unknown binning kind {kind!r}; expected one of {KINDS}")


def assign_rows_to_bins(rows, scheme: BinScheme) -> tuple[list[list], list[bool]]:
    """Distribute rows over bins by ``cc_t``.

    Returns the per-bin row lists and a per-bin under-population flag
    (fewer than 5 rows). Rows below the lowest bin edge are dropped.
    """
    per_bin = [[] for _ in scheme.bins]
    for row in rows:
        for i, b in enumerate(scheme.bins):
            if b.contains(row.cc_t):
                per_bin[i].append(row)
    return per_bin, [len(r) < MIN_BIN_ROWS for r in per_bin]


def select_bin(scheme: BinScheme, cc_now: float) -> int:
    """Index of the bin whose centre is nearest ``cc_now`` (ties go to the lower centre)."""
    dist = np.abs(scheme.centers() - cc_now)
    # distances equal up to rounding count as a tie
    return int(np.nonzero(dist <= dist.min() + 1e-12)[0][0])
