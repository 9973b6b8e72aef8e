"""Seeded experiment sweeps over box size or piece count, and their outputs."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import (
    AdjacencySpec,
    Box,
    Instance,
    ResourceAllocationInstance,
    gen_gaussian,
    gen_l1,
    gen_linf,
    gen_resource_allocation,
    resource_box,
)
from .mechanisms import (
    DP_SUBGRAD,
    M_E,
    M_P,
    M_S,
    PRIVATE_MECHANISMS,
    DpSubgradConfig,
    dp_subgradient_batch,
    run_mechanism_batch,
    solve_nonprivate,
)
from .samplers import McmcConfig, RandomSource
from .solver import StepSchedule, brute_force_optimum, projected_subgradient

BASELINE = "BASELINE"
SUBGRAD = "SUBGRAD"  # regular subgradient method in the iteration study
DP_SUBGRAD_BEST = "DP_SUBGRAD_BEST"  # min-over-iterates diagnostic, not a released output
ALL_MECHANISMS = (*PRIVATE_MECHANISMS, BASELINE)
_MECH_CODES = {name: i for i, name in enumerate((*ALL_MECHANISMS, SUBGRAD))}
INSTANCE_KINDS = ("gaussian", "linf", "l1", "resource", "file")

TRIAL_FIELDS = (
    "mechanism", "sweep_name", "sweep_value", "trial", "objective",
    "true_optimum", "suboptimality", "epsilon", "seed",
)
SUMMARY_FIELDS = ("mechanism", "sweep_name", "sweep_value", "mean", "two_sigma", "runs")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Declarative sweep; at most one of ``m`` / ``half_width`` is a list.

    ``b_max`` and ``step_scale`` are not stated for the original experiments;
    the DP subgradient method uses the constant step ``step_scale / sqrt(k)``.
    """

    d: int = 2
    m: int | list = 10
    half_width: float | list = 1.0
    epsilon: float = 0.1
    runs: int = 1000
    mechanisms: tuple = ALL_MECHANISMS
    k: int = 100
    mcmc_steps: int = 5000
    eta: float = 0.1
    seed: int = 0
    instance_kind: str = "gaussian"
    b_max: float = 0.1
    step_scale: float = 0.2
    price: float = 0.5
    instance_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        for name in ("m", "half_width"):
            v = getattr(self, name)
            if isinstance(v, (list, tuple)):
                if len(v) == 0:
                    raise ConfigError(name, "sweep list is empty")
                object.__setattr__(self, name, list(v))
        self.validate()

    def validate(self):
        if isinstance(self.m, list) and isinstance(self.half_width, list):
            raise ConfigError("m", "only one of m / half_width may be a sweep list")
        if not isinstance(self.d, int) or self.d < 1:
            raise ConfigError("d", "must be a positive integer")
        for m in self.m_values:
            if not isinstance(m, int) or m < 1:
                raise ConfigError("m", f"piece counts must be positive integers, got {m!r}")
        for c in self.half_width_values:
            if not c > 0:
                raise ConfigError("half_width", f"must be positive, got {c!r}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon", "must be positive")
        if not isinstance(self.runs, int) or self.runs < 1:
            raise ConfigError("runs", "must be a positive integer")
        if not self.mechanisms:
            raise ConfigError("mechanisms", "at least one mechanism is required")
        for name in self.mechanisms:
            if name not in ALL_MECHANISMS:
                raise ConfigError("mechanisms", f"unknown mechanism {name!r}")
        if len(set(self.mechanisms)) != len(self.mechanisms):
            raise ConfigError("mechanisms", "duplicate mechanism")
        if self.k < 1:
            raise ConfigError("k", "must be at least 1")
        if self.mcmc_steps < 1:
            raise ConfigError("mcmc_steps", "must be at least 1")
        if not self.eta > 0:
            raise ConfigError("eta", "must be positive")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        if self.instance_kind not in INSTANCE_KINDS:
            raise ConfigError("instance_kind", f"must be one of {INSTANCE_KINDS}")
        if not self.b_max > 0:
            raise ConfigError("b_max", "must be positive")
        if not self.step_scale > 0:
            raise ConfigError("step_scale", "must be positive")
        if self.instance_kind == "file" and not self.instance_path:
            raise ConfigError("instance_path", "required when instance_kind is 'file'")
        if self.instance_kind in ("linf", "l1", "file") and isinstance(self.m, list):
            raise ConfigError("m", f"cannot sweep m for instance_kind {self.instance_kind!r}")
        if self.instance_kind in ("resource", "file") and isinstance(self.half_width, list):
            raise ConfigError("half_width", f"cannot sweep half_width for {self.instance_kind!r}")
        if self.instance_kind in ("gaussian", "linf", "l1") and self.d > 4:
            raise ConfigError("d", "the brute-force optimum supports d <= 4")

    @property
    def m_values(self) -> list:
        return self.m if isinstance(self.m, list) else [self.m]

    @property
    def half_width_values(self) -> list:
        return self.half_width if isinstance(self.half_width, list) else [self.half_width]

    @property
    def sweep(self) -> tuple[str, list]:
        if isinstance(self.half_width, list):
            return "half_width", self.half_width
        return "m", self.m_values

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown config field")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["mechanisms"] = list(self.mechanisms)
        return out

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def instance(self, m: int | None = None, half_width: float | None = None) -> Instance:
        """The problem for one sweep point (nested in ``m`` for Gaussian instances)."""
        m = self.m_values[0] if m is None else m
        c = self.half_width_values[0] if half_width is None else half_width
        adj = AdjacencySpec(self.b_max)
        kind = self.instance_kind
        if kind == "gaussian":
            obj = gen_gaussian(self.d, max(self.m_values), self.seed).prefix(m)
            return Instance(obj, Box.symmetric(self.d, c), adj)
        if kind == "linf":
            return Instance(gen_linf(self.d), Box.symmetric(self.d, c), adj)
        if kind == "l1":
            return Instance(gen_l1(self.d), Box.symmetric(self.d, c), adj)
        if kind == "resource":
            g = np.random.default_rng(self.seed)
            ra = ResourceAllocationInstance(
                g.uniform(0.5, 2.0, m), g.uniform(0.5, 2.0, m), self.price
            )
            return Instance(gen_resource_allocation(ra), resource_box(ra), adj)
        return Instance.load(self.instance_path)

    def dp_schedule(self, k: int | None = None) -> StepSchedule:
        k = self.k if k is None else k
        return StepSchedule("constant", self.step_scale / math.sqrt(k))


@dataclasses.dataclass(frozen=True)
class TrialRecord:
    mechanism: str
    sweep_name: str
    sweep_value: float
    trial_index: int
    objective_value: float
    true_optimum: float
    suboptimality: float
    epsilon: float
    seed: int

    def row(self) -> list[str]:
        return [
            self.mechanism, self.sweep_name, repr(float(self.sweep_value)), str(self.trial_index),
            repr(self.objective_value), repr(self.true_optimum), repr(self.suboptimality),
            repr(self.epsilon), str(self.seed),
        ]

    @classmethod
    def from_row(cls, row: dict) -> TrialRecord:
        return cls(
            row["mechanism"], row["sweep_name"], float(row["sweep_value"]), int(row["trial"]),
            float(row["objective"]), float(row["true_optimum"]), float(row["suboptimality"]),
            float(row["epsilon"]), int(row["seed"]),
        )


@dataclasses.dataclass(frozen=True)
class SummaryRow:
    """Mean objective and 2x the sample standard deviation of per-trial objectives."""

    mechanism: str
    sweep_name: str
    sweep_value: float
    mean: float
    two_sigma: float
    runs: int

    @property
    def std_error(self) -> float:
        return self.two_sigma / 2.0 / math.sqrt(self.runs) if self.runs > 1 else 0.0

    def row(self) -> list[str]:
        return [
            self.mechanism, self.sweep_name, repr(float(self.sweep_value)),
            repr(self.mean), repr(self.two_sigma), str(self.runs),
        ]


@dataclasses.dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[TrialRecord]
    summary: list[SummaryRow]
    true_optima: dict

    def __iter__(self):
        return iter(self.records)

    def cell(self, mechanism: str, sweep_value) -> SummaryRow:
        for row in self.summary:
            if row.mechanism == mechanism and row.sweep_value == float(sweep_value):
                return row
        raise KeyError((mechanism, sweep_value))

    def objectives(self, mechanism: str, sweep_value) -> np.ndarray:
        return np.array([
            r.objective_value for r in self.records
            if r.mechanism == mechanism and r.sweep_value == float(sweep_value)
        ])


def trial_seed(seed: int, sweep_index: int, mechanism: str, trial: int) -> int:
    """Deterministic 63-bit seed for one trial."""
    ss = np.random.SeedSequence([seed, sweep_index, _MECH_CODES[mechanism], trial])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def thread_count() -> int:
    raw = os.environ.get("DP_PWA_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError("DP_PWA_THREADS", f"not an integer: {raw!r}") from None
    return os.cpu_count() or 1


def summarize(records: Sequence[TrialRecord]) -> list[SummaryRow]:
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.mechanism, r.sweep_name, r.sweep_value), []).append(r.objective_value)
    out = []
    for (mech, name, value), vals in groups.items():
        v = np.array(vals)
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        out.append(SummaryRow(mech, name, value, float(v.mean()), 2.0 * sd, v.size))
    return out


def _records(mech, sweep_name, sweep_value, values, f_opt, eps, seeds):
    return [
        TrialRecord(mech, sweep_name, float(sweep_value), t, float(v), f_opt, float(v) - f_opt, eps, s)
        for t, (v, s) in enumerate(zip(values, seeds))
    ]


def _run_cell(config: ExperimentConfig, sweep_index: int, sweep_value, instance, f_opt, mech):
    sweep_name = config.sweep[0]
    eps = config.epsilon
    seeds = [trial_seed(config.seed, sweep_index, mech, t) for t in range(config.runs)]
    if mech == BASELINE:
        v = float(instance.objective.values(solve_nonprivate(instance)[None, :])[0])
        return _records(mech, sweep_name, sweep_value, [v] * config.runs, f_opt, eps, seeds)
    rngs = [RandomSource(s) for s in seeds]
    if mech == DP_SUBGRAD:
        batch = run_dp_subgradient(config, instance, rngs)
        return _records(mech, sweep_name, sweep_value, batch.values, f_opt, eps, seeds) + _records(
            DP_SUBGRAD_BEST, sweep_name, sweep_value, batch.aux["best_value"], f_opt, eps, seeds
        )
    mcmc = McmcConfig.for_box(instance.box, eta=config.eta, steps=config.mcmc_steps)
    batch = run_mechanism_batch(mech, instance, eps, rngs, k=config.k, mcmc=mcmc)
    return _records(mech, sweep_name, sweep_value, batch.values, f_opt, eps, seeds)


def run_dp_subgradient(config: ExperimentConfig, instance: Instance, rngs, k: int | None = None):
    k = config.k if k is None else k
    return dp_subgradient_batch(
        instance, config.epsilon, rngs, DpSubgradConfig(k=k, sched=config.dp_schedule(k))
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """All (sweep value, mechanism) cells; records ordered by sweep, mechanism, trial."""
    sweep_name, values = config.sweep
    instances, optima = [], {}
    for v in values:
        inst = config.instance(**{sweep_name: v})
        instances.append(inst)
        optima[float(v)] = brute_force_optimum(inst)[0]
    jobs = [
        (i, v, instances[i], optima[float(v)], mech)
        for i, v in enumerate(values)
        for mech in config.mechanisms
    ]
    with ThreadPoolExecutor(max_workers=min(thread_count(), len(jobs))) as pool:
        chunks = list(pool.map(lambda job: _run_cell(config, *job), jobs))
    records = [r for chunk in chunks for r in chunk]
    return ExperimentResult(config, records, summarize(records), optima)


def run_iteration_study(config: ExperimentConfig, k_values: Sequence[int]) -> ExperimentResult:
    """DP subgradient (budget split over ``k``) against the regular method, per ``k``."""
    if DP_SUBGRAD not in config.mechanisms:
        raise ConfigError("mechanisms", "iteration study needs DP_SUBGRAD")
    if isinstance(config.m, list) or isinstance(config.half_width, list):
        raise ConfigError("m", "iteration study takes a single instance, not a sweep")
    if not k_values or any(int(k) < 1 for k in k_values):
        raise ConfigError("k_values", "need positive iteration counts")
    inst = config.instance()
    f_opt = brute_force_optimum(inst)[0]
    eps = config.epsilon
    records = []
    for i, k in enumerate(k_values):
        k = int(k)
        seeds = [trial_seed(config.seed, i, DP_SUBGRAD, t) for t in range(config.runs)]
        batch = run_dp_subgradient(config, inst, [RandomSource(s) for s in seeds], k=k)
        records += _records(DP_SUBGRAD, "k", k, batch.values, f_opt, eps, seeds)
        regular = projected_subgradient(inst, k, config.dp_schedule(k))
        records += _records(
            SUBGRAD, "k", k, [regular.best_value], f_opt, eps, [trial_seed(config.seed, i, SUBGRAD, 0)]
        )
    return ExperimentResult(config, records, summarize(records), {"k": f_opt})


PLOT_SCRIPT = '''\
"""Plot mean objective with 2-sigma error bars from summary.csv."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rows = list(csv.DictReader(open(here / "summary.csv")))
curves = defaultdict(list)
for r in rows:
    curves[r["mechanism"]].append((float(r["sweep_value"]), float(r["mean"]), float(r["two_sigma"])))
fig, ax = plt.subplots()
for mech, pts in sorted(curves.items()):
    pts.sort()
    xs, ys, es = zip(*pts)
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=mech)
optima = {}
for line in csv.DictReader(open(here / "trials.csv")):
    optima[float(line["sweep_value"])] = float(line["true_optimum"])
if optima:
    xs = sorted(optima)
    ax.plot(xs, [optima[x] for x in xs], "m--", label="true optimum")
ax.set_xlabel(rows[0]["sweep_name"] if rows else "")
ax.set_ylabel("objective value")
ax.legend()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else here / "summary.png", dpi=150)
'''


def emit_outputs(
    result: ExperimentResult, out_dir, formats: Sequence[str] = ("csv",)
) -> list[Path]:
    """Write ``trials.csv`` / ``summary.csv`` (and JSON, plot script) into ``out_dir``."""
    if not result.records:
        raise ConfigError("records", "nothing to write")
    unknown = set(formats) - {"csv", "json", "plotscript"}
    if unknown:
        raise ConfigError("format", f"unknown output formats {sorted(unknown)}")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats or "plotscript" in formats:
            written.append(_write_csv(out / "trials.csv", TRIAL_FIELDS, (r.row() for r in result.records)))
            written.append(_write_csv(out / "summary.csv", SUMMARY_FIELDS, (r.row() for r in result.summary)))
        if "json" in formats:
            path = out / "results.json"
            payload = {
                "config": result.config.to_dict(),
                "error_bars": "two_sigma is 2x the sample standard deviation of per-trial objectives",
                "summary": [dataclasses.asdict(r) for r in result.summary],
                "trials": [dataclasses.asdict(r) for r in result.records],
            }
            path.write_text(json.dumps(payload, indent=1))
            written.append(path)
        if "plotscript" in formats:
            path = out / "plot_summary.py"
            path.write_text(PLOT_SCRIPT)
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc
    return written


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def read_trials(path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        return [TrialRecord.from_row(row) for row in csv.DictReader(fh)]


__all__ = [
    "ALL_MECHANISMS", "BASELINE", "ConfigError", "DP_SUBGRAD_BEST", "ExperimentConfig",
    "ExperimentResult", "M_E", "M_P", "M_S", "SUBGRAD", "SummaryRow", "TrialRecord",
    "emit_outputs", "read_trials", "run_experiment", "run_iteration_study", "summarize",
    "trial_seed",
]
