"""Telemetry and canopy-cover ingestion, daily aggregation, batch assembly,
and a synthetic batch generator with a known environment response.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .core import K_MAX, K_MIN, sigmoid

ENV_FIELDS = ("co2", "air_temp", "rel_humidity", "ec", "orp", "ph", "water_temp")
TELEMETRY_COLUMNS = ("co2_ppm", "air_temp_c", "rel_humidity_pct", "ec_ms_cm", "orp_mv", "ph", "water_temp_c")
TELEMETRY_HEADER = ("timestamp",) + TELEMETRY_COLUMNS
CANOPY_HEADER = ("timestamp", "cc_fraction")

TELEMETRY_PERIOD = timedelta(minutes=5)
CANOPY_PERIOD = timedelta(minutes=15)
SYNTHETIC_EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)

# hard physical limits per variable; generator output is clipped to these
PHYSICAL_RANGES = {
    "co2": (1e-6, 5000.0),
    "air_temp": (-10.0, 50.0),
    "rel_humidity": (0.0, 100.0),
    "ec": (0.0, 10.0),
    "orp": (-500.0, 1000.0),
    "ph": (0.0, 14.0),
    "water_temp": (0.0, 40.0),
}


class IngestError(ValueError):
    pass


class SchemaError(IngestError):
    pass


class RowError(IngestError):
    def __init__(self, row: int, column: str | None, message: str):
        self.row = row
        self.column = column
        where = f"row {row}" + (f", column {column!r}" if column else "")
        super().__init__(f"{where}: {message}")


class AssemblyError(IngestError):
    pass


class ConfigError(ValueError):
    pass


def _check_env_ranges(values: dict) -> str | None:
    if not 0.0 <= values["rel_humidity"] <= 100.0:
        return "rel_humidity"
    if not 0.0 <= values["ph"] <= 14.0:
        return "ph"
    if not values["co2"] > 0.0:
        return "co2"
    return None


@dataclass(frozen=True)
class EnvVector:
    co2: float
    air_temp: float
    rel_humidity: float
    ec: float
    orp: float
    ph: float
    water_temp: float

    def __post_init__(self):
        bad = _check_env_ranges(self.as_dict())
        if bad:
            raise ValueError(f"{bad}={getattr(self, bad)} outside its physical range")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in ENV_FIELDS])

    def as_dict(self) -> dict[str, float]:
        return {f: getattr(self, f) for f in ENV_FIELDS}

    @classmethod
    def from_array(cls, values) -> "EnvVector":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class TelemetrySample:
    timestamp: datetime
    env: EnvVector


@dataclass(frozen=True)
class DayRecord:
    day: int
    env: EnvVector
    cc: float


@dataclass
class Batch:
    batch_id: str
    days: list[DayRecord]
    # ground-truth daily growth rate, only set by the synthetic generator
    true_k: np.ndarray | None = field(default=None, repr=False, compare=False)
    start_date: date | None = field(default=None, compare=False)

    def __post_init__(self):
        for i, rec in enumerate(self.days):
            if i and rec.day != self.days[i - 1].day + 1:
                raise AssemblyError(f"batch {self.batch_id}: day indices must be contiguous")
            if not 0.0 <= rec.cc <= 1.0:
                raise AssemblyError(f"batch {self.batch_id}: cc {rec.cc} on day {rec.day} outside [0, 1]")

    @property
    def duration_days(self) -> int:
        return len(self.days)

    def env_matrix(self) -> np.ndarray:
        return np.array([rec.env.as_array() for rec in self.days])

    def cc_array(self) -> np.ndarray:
        return np.array([rec.cc for rec in self.days])

    def to_manifest(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "duration_days": self.duration_days,
            "days": [{"day": r.day, "env": r.env.as_dict(), "cc": r.cc} for r in self.days],
        }

    @classmethod
    def from_manifest(cls, obj: dict) -> "Batch":
        try:
            days = [DayRecord(int(d["day"]), EnvVector(**{f: float(d["env"][f]) for f in ENV_FIELDS}),
                              float(d["cc"])) for d in obj["days"]]
            batch = cls(str(obj["batch_id"]), days)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed batch manifest: missing {exc}") from exc
        if int(obj["duration_days"]) != batch.duration_days:
            raise SchemaError(f"batch {batch.batch_id}: duration_days {obj['duration_days']} "
                              f"!= {batch.duration_days} records")
        return batch


# --------------------------------------------------------------------------
# CSV readers


def _text_stream(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_timestamp(text: str) -> datetime:
    """Parse ISO 8601; naive timestamps are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _read_rows(source, header):
    reader = csv.reader(_text_stream(source))
    try:
        found = next(reader)
    except StopIteration:
        raise SchemaError("empty input: missing header") from None
    missing = [c for c in header if c not in found]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    index = {c: found.index(c) for c in header}
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(found):
            raise RowError(rowno, None, f"expected {len(found)} fields, got {len(row)}")
        yield rowno, {c: row[index[c]] for c in header}


def _parse_float(rowno, column, text):
    try:
        value = float(text)
    except ValueError:
        raise RowError(rowno, column, f"cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise RowError(rowno, column, f"non-finite value {text!r}")
    return value


def _parse_ts(rowno, text):
    try:
        return parse_timestamp(text)
    except ValueError:
        raise RowError(rowno, "timestamp", f"cannot parse {text!r} as ISO 8601") from None


def load_telemetry(source) -> list[TelemetrySample]:
    """Read a telemetry CSV into samples sorted by timestamp."""
    samples = []
    for rowno, row in _read_rows(source, TELEMETRY_HEADER):
        ts = _parse_ts(rowno, row["timestamp"])
        values = {f: _parse_float(rowno, col, row[col]) for f, col in zip(ENV_FIELDS, TELEMETRY_COLUMNS)}
        bad = _check_env_ranges(values)
        if bad:
            col = TELEMETRY_COLUMNS[ENV_FIELDS.index(bad)]
            raise RowError(rowno, col, f"value {values[bad]} outside physical range")
        samples.append(TelemetrySample(ts, EnvVector(**values)))
    samples.sort(key=lambda s: s.timestamp)
    return samples


def load_canopy_series(source) -> list[tuple[datetime, float]]:
    out = []
    for rowno, row in _read_rows(source, CANOPY_HEADER):
        ts = _parse_ts(rowno, row["timestamp"])
        cc = _parse_float(rowno, "cc_fraction", row["cc_fraction"])
        if not 0.0 <= cc <= 1.0:
            raise RowError(rowno, "cc_fraction", f"cover {cc} outside [0, 1]")
        out.append((ts, cc))
    out.sort(key=lambda item: item[0])
    return out


# --------------------------------------------------------------------------
# aggregation


def _mean(values) -> float:
    # one residual-correction pass; exact for constant inputs
    n = len(values)
    m = math.fsum(values) / n
    return m + math.fsum(v - m for v in values) / n


def daily_average(samples) -> list[tuple[date, EnvVector]]:
    """Per-UTC-day arithmetic mean of every telemetry variable."""
    by_day: dict[date, list[EnvVector]] = {}
    for s in samples:
        by_day.setdefault(s.timestamp.astimezone(timezone.utc).date(), []).append(s.env)
    out = []
    for day in sorted(by_day):
        envs = by_day[day]
        means = [_mean([getattr(e, f) for e in envs]) for f in ENV_FIELDS]
        out.append((day, EnvVector(*means)))
    return out


def assemble_batch(env_days, cc_samples, batch_id: str) -> Batch:
    """Join daily environment means with daily-mean cover over common days."""
    if not env_days or not cc_samples:
        raise AssemblyError("both environment and cover inputs must be non-empty")
    cc_by_day: dict[date, list[float]] = {}
    for ts, cc in cc_samples:
        cc_by_day.setdefault(ts.astimezone(timezone.utc).date(), []).append(cc)
    env_by_day = dict(env_days)
    common = sorted(set(env_by_day) & set(cc_by_day))
    if not common:
        raise AssemblyError(f"batch {batch_id}: environment and cover records share no days")
    first = common[0]
    days = []
    for d in common:
        ccs = cc_by_day[d]
        days.append(DayRecord((d - first).days, env_by_day[d], _mean(ccs)))
    return Batch(batch_id, days, start_date=first)


# --------------------------------------------------------------------------
# writers (inverse of the readers above)


def write_telemetry_csv(batch: Batch, out, start: datetime | None = None) -> None:
    """Emit one sample every 5 minutes, constant within each day."""
    start = start or _batch_start(batch)
    per_day = int(timedelta(days=1) / TELEMETRY_PERIOD)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TELEMETRY_HEADER)
    for rec in batch.days:
        day_start = start + timedelta(days=rec.day)
        values = [repr(float(getattr(rec.env, f))) for f in ENV_FIELDS]
        for i in range(per_day):
            writer.writerow([format_timestamp(day_start + i * TELEMETRY_PERIOD)] + values)


def write_canopy_csv(batch: Batch, out, start: datetime | None = None) -> None:
    """Emit one cover reading every 15 minutes, constant within each day."""
    start = start or _batch_start(batch)
    per_day = int(timedelta(days=1) / CANOPY_PERIOD)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CANOPY_HEADER)
    for rec in batch.days:
        day_start = start + timedelta(days=rec.day)
        for i in range(per_day):
            writer.writerow([format_timestamp(day_start + i * CANOPY_PERIOD), repr(float(rec.cc))])


def _batch_start(batch: Batch) -> datetime:
    if batch.start_date is not None:
        return datetime(batch.start_date.year, batch.start_date.month, batch.start_date.day, tzinfo=timezone.utc)
    return SYNTHETIC_EPOCH


def write_manifest(batch: Batch, out) -> None:
    json.dump(batch.to_manifest(), out, indent=2, sort_keys=False)
    out.write("\n")


def read_manifest(source) -> Batch:
    try:
        obj = json.load(_text_stream(source))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from None
    return Batch.from_manifest(obj)


# --------------------------------------------------------------------------
# synthetic generator

# optima sit away from the typical operating point so that control matters
DEFAULT_OPTIMA = (1000.0, 24.0, 65.0, 1.8, 350.0, 6.25, 21.0)
DEFAULT_ENV_MEAN = (1000.0, 22.0, 65.0, 1.5, 350.0, 6.6, 21.0)
DEFAULT_ENV_SD = (75.0, 1.0, 4.0, 0.15, 30.0, 0.175, 0.75)
DEFAULT_CURVATURE = (-2e-7, -2e-3, -1e-4, -0.05, -1e-6, -0.2, -2e-3)


@dataclass(frozen=True)
class SyntheticGroundTruth:
    """Known environment -> growth-rate response used to generate batches.

    ``k = base_rate + sum_v slope_v*(env_v - opt_v) + curvature_v*(env_v - opt_v)**2``
    plus Gaussian noise, clamped to the valid growth-rate range. Daily
    environment values are drawn from ``N(env_mean + shift_b, env_sd)`` where
    ``shift_b ~ N(0, batch_shift * env_sd)`` is fixed per batch.

    ``curve`` selects how cover follows the evolving rate: ``"continuous"``
    advances one day along the logistic of the current rate from the previous
    day's cover; ``"fixed_midpoint"`` re-evaluates the curve at day ``d`` with
    the day-0 midpoint held fixed. Both coincide when the rate is constant.
    """

    base_rate: float = 0.35
    optima: tuple = DEFAULT_OPTIMA
    curvature: tuple = DEFAULT_CURVATURE
    slope: tuple = (0.0,) * 7
    noise_sigma: float = 0.01
    env_mean: tuple = DEFAULT_ENV_MEAN
    env_sd: tuple = DEFAULT_ENV_SD
    batch_shift: float = 2.0
    cc_max: float = 1.0
    start_cc: float = 0.03
    curve: str = "continuous"
    seed: int = 0

    def __post_init__(self):
        for name in ("optima", "curvature", "slope", "env_mean", "env_sd"):
            if len(getattr(self, name)) != len(ENV_FIELDS):
                raise ConfigError(f"{name} needs {len(ENV_FIELDS)} entries")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if any(c > 0 for c in self.curvature):
            raise ConfigError("curvature coefficients must be <= 0 (concave response)")
        if any(s < 0 for s in self.env_sd) or self.batch_shift < 0:
            raise ConfigError("standard deviations must be >= 0")
        if not 0 < self.base_rate <= K_MAX:
            raise ConfigError("base_rate must be in (0, 5]")
        if not 0 < self.start_cc < self.cc_max <= 1:
            raise ConfigError("need 0 < start_cc < cc_max <= 1")
        if self.curve not in ("continuous", "fixed_midpoint"):
            raise ConfigError(f"unknown curve mode {self.curve!r}")

    def response(self, env: np.ndarray) -> np.ndarray:
        """Noise-free growth rate for env rows (last axis = the 7 variables)."""
        dev = np.asarray(env, dtype=float) - np.asarray(self.optima)
        return self.base_rate + dev @ np.asarray(self.slope) + (dev * dev) @ np.asarray(self.curvature)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticGroundTruth":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown ground-truth keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})


def _clip_physical(env: np.ndarray) -> np.ndarray:
    lo = np.array([PHYSICAL_RANGES[f][0] for f in ENV_FIELDS])
    hi = np.array([PHYSICAL_RANGES[f][1] for f in ENV_FIELDS])
    return np.clip(env, lo, hi)


def _cover_path(k: np.ndarray, truth: SyntheticGroundTruth) -> np.ndarray:
    cc = np.empty(k.size)
    cc[0] = truth.start_cc
    if truth.curve == "fixed_midpoint":
        t0 = math.log(truth.cc_max / truth.start_cc - 1.0) / k[0]
        t = np.arange(1, k.size, dtype=float)
        cc[1:] = truth.cc_max * sigmoid(k[1:] * (t - t0))
        return cc
    # one day along the logistic of that day's rate, starting from yesterday's cover
    for d in range(1, k.size):
        cc[d] = truth.cc_max / (1.0 + (truth.cc_max / cc[d - 1] - 1.0) * math.exp(-k[d]))
    return cc


def generate_synthetic_batches(truth: SyntheticGroundTruth, n_batches: int, duration_days: int,
                               seed: int | None = None) -> list[Batch]:
    """Forward-simulate ``n_batches`` batches of ``duration_days`` daily records.

    Day 0 starts at ``start_cc``. On each later day the growth rate is the
    response to the previous day's environment plus noise, and cover moves
    along the logistic curve with that rate. Batch ``b`` draws from
    ``default_rng([seed, b])``, so output is deterministic in ``seed``.
    """
    if n_batches < 1:
        raise ConfigError("n_batches must be >= 1")
    if duration_days < 10:
        raise ConfigError("duration_days must be >= 10")
    seed = truth.seed if seed is None else seed
    mean = np.asarray(truth.env_mean)
    sd = np.asarray(truth.env_sd)
    batches = []
    for b in range(n_batches):
        rng = np.random.default_rng([seed, b])
        shift = rng.normal(0.0, 1.0, size=mean.size) * sd * truth.batch_shift
        env = _clip_physical(mean + shift + rng.normal(0.0, 1.0, size=(duration_days, mean.size)) * sd)
        noise = rng.normal(0.0, 1.0, size=duration_days) * truth.noise_sigma
        k = np.empty(duration_days)
        k[0] = truth.response(env[0])
        k[1:] = truth.response(env[:-1]) + noise[1:]
        k = np.clip(k, K_MIN, K_MAX)
        cc = _cover_path(k, truth)
        days = [DayRecord(d, EnvVector.from_array(env[d]), float(cc[d])) for d in range(duration_days)]
        start = (SYNTHETIC_EPOCH + timedelta(days=64 * b)).date()
        batches.append(Batch(f"batch_{b:03d}", days, true_k=k, start_date=start))
    return batches
