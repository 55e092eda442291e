"""Experiment engine: configs, trials, excess-risk estimation and reports.

A trial ``i`` of a run with seed ``s`` draws everything from
``RngStream(s, i)``: child 0 samples the dataset, child 1 drives the
algorithm and child 2 samples the fresh items used for risk estimation.
Any row can therefore be recomputed from the resolved config and the seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path

import numpy as np

from .core import InvalidParameterError, NoiseHook, PrivacyBudget, RngStream, UserDataset
from .losses import (
    LossOracle,
    PopulationSpec,
    analytic_minimizer,
    excess_risk,
    make_loss,
    make_population,
    sample_items,
    sample_population,
)
from .optimizer import (
    DEFAULT_C,
    DEFAULT_T_CAP,
    default_config,
    dpsgd,
    localization_schedule,
    localized_dpsgd,
    nonprivate_sgd,
)
from .verify import CheckReport, run_suite

ALGORITHMS = ("dpsgd", "localized", "nonprivate")
PROXY_ITEMS = 200_000
PROXY_STEPS = 50_000


@dataclass
class ExperimentConfig:
    loss: dict
    population: dict
    n: int
    m: int
    d: int
    epsilon: float = 1.0
    delta: float = 1e-5
    algorithm: str = "dpsgd"
    t_cap: int = DEFAULT_T_CAP
    repetitions: int = 1
    seed: int = 0
    k_fresh: int = 10_000
    out: str | None = None
    C: float = DEFAULT_C
    noise: str = "real"
    workers: int = 1

    def __post_init__(self):
        for name in ("n", "m", "d", "t_cap", "repetitions", "seed", "k_fresh", "workers"):
            setattr(self, name, int(getattr(self, name)))
        self.epsilon = float(self.epsilon)
        self.delta = float(self.delta)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidParameterError(f"unknown config fields: {sorted(unknown)}")
        missing = {"loss", "population", "n", "m", "d"} - set(raw)
        if missing:
            raise InvalidParameterError(f"missing config fields: {sorted(missing)}")
        try:
            return cls(**raw)
        except (TypeError, ValueError) as exc:
            raise InvalidParameterError(f"bad config value: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        raw = _load_json(path)
        raw.pop("grid", None)
        return cls.from_dict(raw)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        raw = self.to_dict()
        raw.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def identity(self) -> dict:
        """Fields that determine the numbers (output location and worker count excluded)."""
        out = self.to_dict()
        out.pop("out")
        out.pop("workers")
        return out

    def config_hash(self) -> str:
        return hashlib.sha256(_canonical(self.identity()).encode()).hexdigest()

    @property
    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.delta)


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidParameterError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidParameterError("config file must hold a JSON object")
    return raw


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


@dataclass
class Resolved:
    """Objects built from a config, plus every derived parameter."""

    config: ExperimentConfig
    loss: LossOracle
    population: PopulationSpec
    derived: dict
    theta_star: np.ndarray | None
    theta_star_source: str


def nonprivate_params(cfg: ExperimentConfig, loss: LossOracle) -> dict:
    """One pass of single-item SGD: ``T = n m`` and ``eta = D / (G sqrt(T))``."""
    T = cfg.n * cfg.m
    return {"T": T, "eta": loss.domain.diameter / (loss.G * math.sqrt(T))}


def resolve(cfg: ExperimentConfig, allow_zeroed: bool = False) -> Resolved:
    """Validate a config and derive parameters; raises before any heavy computation."""
    if cfg.algorithm not in ALGORITHMS:
        raise InvalidParameterError(f"unknown algorithm {cfg.algorithm!r}; choose from {ALGORITHMS}")
    if cfg.repetitions < 1:
        raise InvalidParameterError("repetitions must be >= 1")
    if min(cfg.n, cfg.m, cfg.d) < 1:
        raise InvalidParameterError("n, m, d must be >= 1")
    if cfg.k_fresh < 1000:
        raise InvalidParameterError("k_fresh must be >= 1000")
    if cfg.workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    if cfg.noise not in ("real", "zeroed"):
        raise InvalidParameterError(f"noise must be 'real' or 'zeroed', got {cfg.noise!r}")
    if cfg.noise == "zeroed" and not allow_zeroed:
        raise InvalidParameterError("zeroed noise is only available with --unsafe-no-noise")
    budget = cfg.budget
    try:
        loss = make_loss(cfg.loss, cfg.d)
        population = make_population(cfg.population, cfg.d)
    except KeyError as exc:
        raise InvalidParameterError(f"missing parameter {exc}") from exc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if cfg.algorithm == "dpsgd":
            derived = default_config(cfg.n, cfg.m, cfg.d, budget, loss.G, loss.domain.diameter,
                                     cfg.t_cap, theta0=loss.domain.center).to_dict()
        elif cfg.algorithm == "localized":
            derived = localization_schedule(cfg.n, cfg.m, cfg.d, budget, loss.G, loss.mu,
                                            cfg.C, cfg.t_cap, R=loss.domain.diameter).to_dict()
        else:
            derived = nonprivate_params(cfg, loss)
    theta_star = analytic_minimizer(loss, population)
    source = "analytic" if theta_star is not None else "nonprivate_proxy"
    return Resolved(cfg, loss, population, derived, theta_star, source)


def proxy_minimizer(loss: LossOracle, population: PopulationSpec, seed: int) -> np.ndarray:
    """Long single-item SGD on a large fresh sample, used when no closed form is known."""
    rng = RngStream(seed, 2**31 - 1)
    items = sample_items(population, PROXY_ITEMS, rng).reshape(PROXY_ITEMS, 1, -1)
    eta = loss.domain.diameter / (loss.G * math.sqrt(PROXY_STEPS))
    return nonprivate_sgd(UserDataset(items), loss, PROXY_STEPS, eta, rng.child(0))


def run_trial(res: Resolved, trial: int) -> dict:
    """One independent repetition; returns a report row."""
    cfg = res.config
    hook = NoiseHook("zeroed" if cfg.noise == "zeroed" else "real")
    stream = RngStream(cfg.seed, trial, hook)
    data = sample_population(res.population, cfg.n, cfg.m, stream.child(0))
    algo = stream.child(1)
    loss = res.loss
    start = time.perf_counter()
    halted = False
    iterations = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if cfg.algorithm == "dpsgd":
            sgd = default_config(cfg.n, cfg.m, cfg.d, cfg.budget, loss.G, loss.domain.diameter,
                                 cfg.t_cap, theta0=loss.domain.center)
            out = dpsgd(data, loss, sgd, algo)
            theta, halted, iterations = out.theta_hat, out.halted, out.iterations
        elif cfg.algorithm == "localized":
            out = localized_dpsgd(data, loss, cfg.budget, cfg.C, cfg.t_cap, algo)
            theta, halted = out.theta_hat, out.halted
            iterations = sum(p.iterations for p in out.phases)
        else:
            p = res.derived
            theta = nonprivate_sgd(data, loss, p["T"], p["eta"], algo)
            iterations = p["T"]
    wall = time.perf_counter() - start
    est = excess_risk(loss, theta, res.theta_star, res.population, cfg.k_fresh, stream.child(2))
    return {
        "trial": trial,
        "seed": cfg.seed,
        "excess_risk": est.value,
        "stderr": est.stderr,
        "halted": bool(halted),
        "iterations": iterations,
        "theta_hat": [float(x) for x in theta],
        "wall_time": wall,
    }


def _trial_worker(args):
    raw, trial, allow_zeroed, theta_star, source = args
    res = resolve(ExperimentConfig.from_dict(raw), allow_zeroed)
    res.theta_star, res.theta_star_source = np.asarray(theta_star), source
    return run_trial(res, trial)


@dataclass
class ExperimentReport:
    config: dict
    config_hash: str
    seed: int
    derived: dict
    rows: list
    aggregate: dict
    private: bool = True
    theta_star: list = field(default_factory=list)
    theta_star_source: str = "analytic"

    @property
    def mean(self) -> float:
        return self.aggregate["mean"]

    @property
    def stderr(self) -> float:
        return self.aggregate["stderr"]

    def header(self) -> dict:
        return {"config": self.config, "config_hash": self.config_hash, "seed": self.seed,
                "derived": self.derived, "private": self.private,
                "theta_star": self.theta_star, "theta_star_source": self.theta_star_source}

    def jsonl_rows(self) -> list[dict]:
        base = {"config_hash": self.config_hash, "private": self.private}
        return [{**base, **row} for row in self.rows]

    def write(self, out_dir) -> Path:
        """``trials.jsonl`` (one row per trial), ``summary.csv`` and ``report.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trials.jsonl", "w", encoding="utf-8") as fh:
            for row in self.jsonl_rows():
                fh.write(json.dumps(row, default=_plain) + "\n")
        with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
            summary = summary_row(self)
            writer = csv.DictWriter(fh, fieldnames=list(summary))
            writer.writeheader()
            writer.writerow(summary)
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump({**self.header(), "aggregate": self.aggregate}, fh, indent=2, default=_plain)
        return out


def aggregate(rows: list) -> dict:
    risk = np.array([r["excess_risk"] for r in rows])
    if len(rows) > 1:
        stderr = float(risk.std(ddof=1) / math.sqrt(len(rows)))
    else:
        stderr = float(rows[0]["stderr"])
    return {
        "mean": float(risk.mean()),
        "stderr": stderr,
        "repetitions": len(rows),
        "halted_fraction": float(np.mean([r["halted"] for r in rows])),
        "mean_wall_time": float(np.mean([r["wall_time"] for r in rows])),
    }


def summary_row(report: ExperimentReport) -> dict:
    cfg = report.config
    return {
        "config_hash": report.config_hash,
        "algorithm": cfg["algorithm"],
        "n": cfg["n"], "m": cfg["m"], "d": cfg["d"],
        "epsilon": cfg["epsilon"], "delta": cfg["delta"],
        "private": report.private,
        **report.aggregate,
    }


def run(cfg: ExperimentConfig, unsafe_no_noise: bool = False, write: bool = True) -> ExperimentReport:
    """Run ``cfg.repetitions`` independent trials and (optionally) write the report."""
    if unsafe_no_noise:
        cfg = cfg.with_overrides(noise="zeroed")
    res = resolve(cfg, allow_zeroed=unsafe_no_noise)
    if res.theta_star is None:
        res.theta_star = proxy_minimizer(res.loss, res.population, cfg.seed)
    trials = range(cfg.repetitions)
    if cfg.workers > 1:
        args = [(cfg.to_dict(), t, unsafe_no_noise, res.theta_star.tolist(), res.theta_star_source)
                for t in trials]
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(_trial_worker, args))
    else:
        rows = [run_trial(res, t) for t in trials]
    report = ExperimentReport(
        config=cfg.to_dict(), config_hash=cfg.config_hash(), seed=cfg.seed, derived=res.derived,
        rows=rows, aggregate=aggregate(rows), private=cfg.noise != "zeroed",
        theta_star=res.theta_star.tolist(), theta_star_source=res.theta_star_source,
    )
    if write and cfg.out:
        report.write(cfg.out)
    return report


def reproduce_row(report: ExperimentReport, trial: int) -> dict:
    """Recompute one row from the report's embedded config and seed."""
    cfg = ExperimentConfig.from_dict(report.config)
    zeroed = cfg.noise == "zeroed"
    res = resolve(cfg, allow_zeroed=zeroed)
    res.theta_star = np.asarray(report.theta_star)
    return run_trial(res, trial)


def sweep(base: ExperimentConfig, grid: dict, unsafe_no_noise: bool = False,
          out: str | None = None) -> list[ExperimentReport]:
    """One report per point of the Cartesian grid over ``{n, m, d, epsilon}``.

    Writes ``sweep.csv`` (one tidy row per grid point) under ``out`` or ``base.out``.
    """
    if not grid:
        raise InvalidParameterError("sweep grid is empty")
    allowed = {"n", "m", "d", "epsilon", "delta", "algorithm"}
    bad = set(grid) - allowed
    if bad:
        raise InvalidParameterError(f"cannot sweep over {sorted(bad)}; allowed: {sorted(allowed)}")
    keys = list(grid)
    values = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
    points = [dict(zip(keys, combo)) for combo in product(*values)]
    cfgs = [base.with_overrides(**point, out=None) for point in points]
    for c in cfgs:  # fail on any bad grid point before running anything
        resolve(c.with_overrides(noise="zeroed") if unsafe_no_noise else c, allow_zeroed=unsafe_no_noise)
    reports = [run(c, unsafe_no_noise, write=False) for c in cfgs]
    dest = out or base.out
    if dest:
        write_sweep_csv(reports, keys, Path(dest) / "sweep.csv")
    return reports


def write_sweep_csv(reports, keys, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = None
        for rep in reports:
            row = {k: rep.config[k] for k in keys}
            row.update(summary_row(rep))
            if writer is None:
                writer = csv.DictWriter(fh, fieldnames=list(row))
                writer.writeheader()
            writer.writerow(row)
    return path


def load_sweep(path) -> tuple[ExperimentConfig, dict]:
    """A sweep file is a run config with an extra ``grid`` mapping."""
    raw = _load_json(path)
    grid = raw.pop("grid", None)
    if not isinstance(grid, dict):
        raise InvalidParameterError("sweep config needs a 'grid' object")
    return ExperimentConfig.from_dict(raw), grid


def verify(suite: str, trials: int | None = None, seed: int = 0) -> list[CheckReport]:
    return run_suite(suite, trials, seed)
