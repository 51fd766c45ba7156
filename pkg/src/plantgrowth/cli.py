"""Command-line pipeline: gen-data, fit, benchmark, simulate, train-agent, evaluate.

Every command reads one declarative YAML/JSON config; ``--seed`` and ``--out``
override the config. Exit codes: 0 success, 1 data/model error, 2 missing
artifact, 3 config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import ingest
from .agents import (PPOConfig, Policy, RandomStrategy, ReplayStrategy, SampledEnvStrategy, evaluate_strategy,
                     train_policy)
from .core import GrowthParams, RewardConfig
from .curvefit import FitError, fit_logistic, read_fit_report, rolling_fits, write_fit_report
from .envmodel import (FeatureConfig, ModelError, SelectionError, benchmark_grid, build_features, load_model, save_model,
                       select_best, split_train_test)
from .envmodel.binning import KINDS
from .envmodel.regressors import FAMILIES
from .sim import EnvStats, SimConfig, SimError, run_episode

log = logging.getLogger("plantgrowth")

EXIT_OK, EXIT_DATA, EXIT_MISSING, EXIT_CONFIG = 0, 1, 2, 3

DATA_DIR = "data"
FIT_REPORT = "fit_report.csv"
BENCHMARK_CSV = "benchmark.csv"
MODEL_JSON = "model.json"
STATS_JSON = "env_stats.json"
POLICY_JSON = "policy.json"
REWARD_CURVE_CSV = "reward_curve.csv"
EVAL_JSON = "evaluation.json"
EVAL_CSV = "evaluation.csv"
TRACES_DIR = "traces"
FINAL_K_CSV = "final_k.csv"
TRUTH_JSON = "ground_truth.json"


class ConfigError(Exception):
    pass


class MissingArtifact(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int
    out: Path
    data_dir: Path
    truth: ingest.SyntheticGroundTruth = field(default_factory=ingest.SyntheticGroundTruth)
    n_batches: int = 30
    duration_days: int = 31
    features: FeatureConfig = field(default_factory=lambda: FeatureConfig(ma_windows=(2, 3, 4, 5, 6)))
    families: tuple = FAMILIES
    binnings: tuple = KINDS
    criterion: str = "mse"
    split_ratio: float = 0.8
    model_family: str | None = None
    model_binning: str | None = None
    hyper: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    repetitions: int = 10
    ppo: PPOConfig = field(default_factory=PPOConfig)
    n_episodes: int = 1000
    replay_top: int | None = None

    @classmethod
    def load(cls, path, seed=None, out=None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw, base=path.parent, seed=seed, out=out)

    @classmethod
    def from_dict(cls, raw: dict, base=Path("."), seed=None, out=None) -> "RunConfig":
        known = {"seed", "out", "data_dir", "truth", "generate", "features", "benchmark", "model", "sim",
                 "simulate", "agent", "evaluate"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        seed = raw.get("seed") if seed is None else seed
        if seed is None:
            raise ConfigError("a seed is mandatory (config 'seed' or --seed)")
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {seed!r}") from None
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        out = Path(out) if out is not None else base / raw.get("out", "out")
        data_dir = base / raw["data_dir"] if "data_dir" in raw else out / DATA_DIR
        try:
            gen = raw.get("generate", {})
            bench = raw.get("benchmark", {})
            model = raw.get("model", {})
            evaluate = raw.get("evaluate", {})
            cfg = cls(
                seed=seed, out=out, data_dir=data_dir,
                truth=ingest.SyntheticGroundTruth.from_dict(raw.get("truth", {})),
                n_batches=int(gen.get("n_batches", 30)),
                duration_days=int(gen.get("duration_days", 31)),
                features=FeatureConfig.from_dict(raw.get("features", {"ma_windows": [2, 3, 4, 5, 6]})),
                families=tuple(bench.get("families", FAMILIES)),
                binnings=tuple(bench.get("binnings", KINDS)),
                criterion=bench.get("criterion", "mse"),
                split_ratio=float(bench.get("split_ratio", 0.8)),
                hyper=dict(bench.get("hyper", {})),
                model_family=model.get("family"),
                model_binning=model.get("binning"),
                sim=dict(raw.get("sim", {})),
                repetitions=int(raw.get("simulate", {}).get("repetitions", 10)),
                ppo=PPOConfig.from_dict(raw.get("agent", {})),
                n_episodes=int(evaluate.get("n_episodes", 1000)),
                replay_top=evaluate.get("replay_top"),
            )
        except (TypeError, ValueError, KeyError, AttributeError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        cfg.validate()
        return cfg

    def validate(self):
        if self.n_batches < 1:
            raise ConfigError("generate.n_batches must be >= 1")
        if self.duration_days < 10:
            raise ConfigError("generate.duration_days must be >= 10")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ConfigError(f"unknown model families: {bad}")
        bad = [b for b in self.binnings if b not in KINDS]
        if bad:
            raise ConfigError(f"unknown binnings: {bad}")
        if self.criterion not in ("mse", "r2"):
            raise ConfigError("benchmark.criterion must be 'mse' or 'r2'")
        if not 0 < self.split_ratio < 1:
            raise ConfigError("benchmark.split_ratio must lie in (0, 1)")
        if (self.model_family is None) != (self.model_binning is None):
            raise ConfigError("model.family and model.binning must be given together")
        if self.model_family is not None and (self.model_family not in FAMILIES or self.model_binning not in KINDS):
            raise ConfigError(f"invalid model override {self.model_family}/{self.model_binning}")
        if self.repetitions < 1 or self.n_episodes < 1:
            raise ConfigError("simulate.repetitions and evaluate.n_episodes must be >= 1")


# --------------------------------------------------------------------------
# artifact helpers


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifact(f"missing artifact: {path}")
    return path


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def load_batch(d: Path) -> ingest.Batch:
    """Assemble one batch directory from its telemetry and canopy CSVs."""
    tel_path, can_path = _require(d / "telemetry.csv"), _require(d / "canopy.csv")
    try:
        with open(tel_path, newline="") as fh:
            env_days = ingest.daily_average(ingest.load_telemetry(fh))
    except ingest.IngestError as exc:
        raise DataError(f"{tel_path}: {exc}") from None
    try:
        with open(can_path, newline="") as fh:
            cover = ingest.load_canopy_series(fh)
    except ingest.IngestError as exc:
        raise DataError(f"{can_path}: {exc}") from None
    try:
        return ingest.assemble_batch(env_days, cover, d.name)
    except ingest.IngestError as exc:
        raise DataError(f"{d}: {exc}") from None


def load_batches(data_dir: Path, collect_errors: bool = False):
    """Load every batch under ``data_dir`` in sorted order.

    With ``collect_errors`` the per-batch :class:`DataError` messages are
    returned alongside the good batches instead of raised.
    """
    _require(data_dir)
    batch_dirs = sorted(p for p in data_dir.iterdir() if p.is_dir())
    if not batch_dirs:
        raise MissingArtifact(f"no batch directories under {data_dir}")
    batches, errors = [], []
    for d in batch_dirs:
        try:
            batches.append(load_batch(d))
        except DataError as exc:
            if not collect_errors:
                raise
            errors.append(str(exc))
    return (batches, errors) if collect_errors else batches


def _sim_config(cfg: RunConfig, model, stats) -> SimConfig:
    s = cfg.sim
    init = s.get("init", {})
    try:
        params = GrowthParams(cc_max=float(init.get("cc_max", 1.0)), k=float(init.get("k", 0.2)),
                              t0=float(init.get("t0", 20.0)))
        k_target = s.get("k_target")
        reward_cfg = RewardConfig(k_target=float(k_target) if k_target is not None else model.k_max,
                                  scale=float(s.get("reward_scale", 100.0)))
        return SimConfig(model=model, stats=stats, init=params, horizon_days=int(s.get("horizon_days", 35)),
                         start_cc=float(s.get("start_cc", 0.03)), terminal_cc=float(s.get("terminal_cc", 0.95)),
                         reward_cfg=reward_cfg, seed=cfg.seed)
    except (ValueError, SimError) as exc:
        raise ConfigError(f"invalid sim settings: {exc}") from None


def _load_sim(cfg: RunConfig) -> SimConfig:
    model = load_model(_require(cfg.out / MODEL_JSON))
    stats = EnvStats.from_dict(json.loads(_require(cfg.out / STATS_JSON).read_text()))
    return _sim_config(cfg, model, stats)


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg: RunConfig) -> int:
    batches = ingest.generate_synthetic_batches(cfg.truth, cfg.n_batches, cfg.duration_days, seed=cfg.seed)
    try:
        cfg.data_dir.mkdir(parents=True, exist_ok=True)
        for b in batches:
            d = cfg.data_dir / b.batch_id
            d.mkdir(exist_ok=True)
            with open(d / "telemetry.csv", "w", newline="") as fh:
                ingest.write_telemetry_csv(b, fh)
            with open(d / "canopy.csv", "w", newline="") as fh:
                ingest.write_canopy_csv(b, fh)
            with open(d / "manifest.json", "w") as fh:
                ingest.write_manifest(b, fh)
        _dump_json(dict(cfg.truth.to_dict(), seed=cfg.seed), cfg.data_dir / TRUTH_JSON)
    except OSError as exc:
        raise DataError(f"cannot write to {exc.filename or cfg.data_dir}: {exc.strerror}") from None
    true_k = np.concatenate([b.true_k for b in batches])
    print(f"wrote {len(batches)} batches x {cfg.duration_days} days to {cfg.data_dir}")
    print(f"ground truth: base_rate={cfg.truth.base_rate} noise_sigma={cfg.truth.noise_sigma} "
          f"pH optimum={cfg.truth.optima[5]} true k range [{true_k.min():.4f}, {true_k.max():.4f}]")
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    batches, failures = load_batches(cfg.data_dir, collect_errors=True)
    series = []
    for b in batches:
        try:
            series.append(rolling_fits(b))
        except FitError as exc:
            failures.append(f"{b.batch_id}: {exc}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / FIT_REPORT, "w", newline="") as fh:
        write_fit_report(series, fh)
    n_rows = sum(len(s.entries) for s in series)
    n_conv = sum(f.converged for s in series for _, f in s.entries)
    print(f"fitted {len(series)} batches: {n_rows} rolling fits, {n_conv} converged -> {cfg.out / FIT_REPORT}")
    for msg in failures:
        print(f"error: {msg}", file=sys.stderr)
    return EXIT_DATA if failures else EXIT_OK


def _feature_rows(cfg: RunConfig, batches):
    fits = read_fit_report(_require(cfg.out / FIT_REPORT).read_text())
    rows = []
    for b in batches:
        if b.batch_id not in fits:
            raise DataError(f"fit report has no entries for batch {b.batch_id}")
        rows += build_features(b, fits[b.batch_id], cfg.features)
    return rows


def cmd_benchmark(cfg: RunConfig) -> int:
    batches = load_batches(cfg.data_dir)
    rows = _feature_rows(cfg, batches)
    split = split_train_test(rows, cfg.split_ratio, cfg.seed)
    table, models = benchmark_grid(split, cfg.features, cfg.families, cfg.binnings, cfg.hyper, keep_models=True)
    with open(cfg.out / BENCHMARK_CSV, "w", newline="") as fh:
        table.write_csv(fh)
    for row in table.rows:
        if row.failed:
            print(f"cell {row.family}/{row.binning} failed: {row.error}", file=sys.stderr)
    best = select_best(table, cfg.criterion)
    print(f"selected: {best.family} / {best.binning} (r2={best.r2:.6f}, mse={best.mse:.6g}, by {cfg.criterion})")
    if cfg.model_family is not None:
        key = (cfg.model_family, cfg.model_binning)
        if key not in models:
            raise DataError(f"configured model {key} was not trained successfully")
        print(f"simulator model overridden by config: {key[0]} / {key[1]}")
    else:
        key = (best.family, best.binning)
    save_model(models[key], cfg.out / MODEL_JSON)
    _dump_json(EnvStats.from_batches(batches).to_dict(), cfg.out / STATS_JSON)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    sim_cfg = _load_sim(cfg)
    strategy = SampledEnvStrategy(sim_cfg.stats)
    traces_dir = cfg.out / TRACES_DIR
    traces_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for i in range(cfg.repetitions):
        trace = run_episode(sim_cfg, strategy, episode=i)
        with open(traces_dir / f"episode_{i:03d}.jsonl", "w") as fh:
            trace.write_jsonl(fh)
        last = trace.steps[-1]
        summary.append([i, len(trace), repr(last["k"]), repr(last["cc"]), repr(trace.total_reward)])
    with open(cfg.out / FINAL_K_CSV, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "steps", "final_k", "final_cc", "total_reward"])
        writer.writerows(summary)
    print(f"simulated {cfg.repetitions} episodes -> {traces_dir}, {cfg.out / FINAL_K_CSV}")
    return EXIT_OK


def cmd_train_agent(cfg: RunConfig) -> int:
    sim_cfg = _load_sim(cfg)
    report = train_policy(sim_cfg, cfg.ppo, seed=cfg.seed)
    report.policy.save(cfg.out / POLICY_JSON)
    with open(cfg.out / REWARD_CURVE_CSV, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "episodes", "mean_episode_reward"])
        for i, (n, r) in enumerate(zip(report.episodes_per_iteration, report.reward_curve)):
            writer.writerow([i, n, repr(r)])
    print(f"trained {report.iterations} iterations; final mean episode reward {report.reward_curve[-1]:.4f}")
    return EXIT_OK


def _replay_batches(cfg: RunConfig, batches):
    if cfg.replay_top is None:
        return batches
    # rank recorded batches by the growth rate of a whole-batch fit
    scored = []
    for b in batches:
        days = np.array([[r.day, r.cc] for r in b.days])
        try:
            scored.append((fit_logistic(days).params.k, b.batch_id, b))
        except FitError:
            continue
    scored.sort(key=lambda x: (-x[0], x[1]))
    return [b for _, _, b in scored[: int(cfg.replay_top)]]


def cmd_evaluate(cfg: RunConfig) -> int:
    sim_cfg = _load_sim(cfg)
    policy = Policy.load(_require(cfg.out / POLICY_JSON))
    batches = load_batches(cfg.data_dir)
    strategies = [
        ("random", RandomStrategy(sim_cfg.stats)),
        ("replay", ReplayStrategy(_replay_batches(cfg, batches))),
        ("policy", policy.strategy(sim_cfg.stats)),
    ]
    reports = [evaluate_strategy(sim_cfg, s, cfg.n_episodes, seed=cfg.seed, name=name) for name, s in strategies]
    _dump_json([r.to_dict() for r in reports], cfg.out / EVAL_JSON)
    with open(cfg.out / EVAL_CSV, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "mean_reward", "sd_reward"])
        for r in reports:
            writer.writerow([r.strategy, repr(r.mean_reward), repr(r.sd_reward)])
    for r in reports:
        print(f"{r.strategy:>7}: mean reward {r.mean_reward:.4f} (sd {r.sd_reward:.4f}) over "
              f"{r.n_episodes} episodes, mean length {r.mean_length:.2f}, failures {r.failures}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "benchmark": cmd_benchmark,
    "simulate": cmd_simulate,
    "train-agent": cmd_train_agent,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML or JSON run config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="override the output directory")
    common.add_argument("--criterion", choices=("mse", "r2"), default=argparse.SUPPRESS,
                        help="benchmark selection criterion")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="plantgrowth", parents=[common], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    logging.basicConfig(level=logging.DEBUG if args.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if "config" not in args:
            raise ConfigError("--config is required")
        cfg = RunConfig.load(args["config"], seed=args.get("seed"), out=args.get("out"))
        if "criterion" in args:
            cfg.criterion = args["criterion"]
        return COMMANDS[args["command"]](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, ingest.IngestError, FitError, SimError, ModelError, SelectionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: cannot access {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
