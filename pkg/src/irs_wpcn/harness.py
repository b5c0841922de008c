"""Monte-Carlo sweeps over geometry and IRS size, with CSV output."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .ao_optimizer import OptimizationResult, OptimizerConfig, optimize, optimize_asy_best
from .channel_model import ChannelSet, ScenarioConfig, generate
from .system_model import Scheme

log = logging.getLogger(__name__)

PARAMETERS = ("d_hap", "n_total", "d_i")
BASELINES = ("with_irs", "no_irs")
CSV_COLUMNS = (
    "scheme",
    "baseline",
    "value",
    "trial",
    "seed",
    "sum_throughput",
    "total_energy",
    "iterations",
    "converged",
    "wall_time",
    "error",
)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    trials: int = 20
    base: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(K=2, L=2, M=2, N_per_irs=4))
    schemes: tuple[str, ...] = ("asy", "tdma", "syn")
    baselines: tuple[str, ...] = ("with_irs",)
    seed_base: int = 0
    asy_warm_start: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(Scheme(s).value for s in self.schemes))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        if self.parameter not in PARAMETERS:
            raise ValueError(f"parameter must be one of {PARAMETERS}")
        if not self.values:
            raise ValueError("values must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        for b in self.baselines:
            if b not in BASELINES:
                raise ValueError(f"unknown baseline {b!r}")
        if self.parameter == "n_total":
            for v in self.values:
                if int(v) != v or int(v) < self.base.L or int(v) % self.base.L:
                    raise ValueError(f"n_total value {v} is not a positive multiple of L={self.base.L}")

    def config_for(self, value) -> ScenarioConfig:
        if self.parameter == "n_total":
            return self.base.replace(N_per_irs=int(value) // self.base.L)
        return self.base.replace(**{self.parameter: float(value)})

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SweepSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown sweep fields {sorted(unknown)}")
        kwargs = dict(data)
        if "base" in kwargs:
            kwargs["base"] = ScenarioConfig.from_dict(kwargs["base"])
        return cls(**kwargs)


@dataclass
class ResultRow:
    scheme: str
    baseline: str
    value: float
    trial: int
    seed: int
    sum_throughput: float
    total_energy: float
    iterations: int
    converged: bool
    wall_time: float
    error: str = ""


def trial_seed(seed_base: int, value, trial: int) -> int:
    """Stable per-(value, trial) seed; independent of the other sweep values."""
    key = f"{float(value)!r}/{int(trial)}".encode()
    digest = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
    return (int(seed_base) ^ digest) & (2**63 - 1)


def run_no_irs_baseline(
    channels: ChannelSet, cfg: ScenarioConfig, opt_cfg: OptimizerConfig | None, scheme
) -> OptimizationResult:
    """Optimize with every IRS vector pinned to ``[0, ..., 0, 1]``."""
    opt_cfg = opt_cfg or OptimizerConfig()
    return optimize(scheme, channels, cfg, dataclasses.replace(opt_cfg, optimize_irs=False, warm_start=None))


def run_schemes(
    channels: ChannelSet,
    cfg: ScenarioConfig,
    opt_cfg: OptimizerConfig,
    schemes: Iterable[str],
    asy_warm_start: bool = True,
) -> dict[str, OptimizationResult]:
    """Requested schemes on one channel set; Asy is the best of fresh and warm-started runs."""
    schemes = [Scheme(s) for s in schemes]
    out: dict[str, OptimizationResult] = {}
    subs = [s for s in (Scheme.TDMA, Scheme.SYN) if s in schemes or (asy_warm_start and Scheme.ASY in schemes)]
    done = {s: optimize(s, channels, cfg, opt_cfg) for s in subs}
    for s in schemes:
        if s is Scheme.ASY:
            seeds = [done[Scheme.TDMA], done[Scheme.SYN]] if asy_warm_start else []
            out[s.value] = optimize_asy_best(channels, cfg, opt_cfg, seeds)
        else:
            out[s.value] = done[s]
    return out


def _trial_rows(spec: SweepSpec, opt_cfg: OptimizerConfig, value, trial: int, record_timing: bool) -> list[ResultRow]:
    seed = trial_seed(spec.seed_base, value, trial)
    rows = []
    try:
        cfg = spec.config_for(value).replace(seed=seed)
        channels = generate(cfg, seed)
    except Exception as exc:  # noqa: BLE001 - recorded in-row
        err = f"{type(exc).__name__}: {exc}"
        return [_error_row(s, b, value, trial, seed, err) for b in spec.baselines for s in spec.schemes]
    run_cfg = dataclasses.replace(opt_cfg, seed=seed % (2**32), warm_start=None)
    for baseline in spec.baselines:
        bcfg = run_cfg if baseline == "with_irs" else dataclasses.replace(run_cfg, optimize_irs=False)
        start = time.perf_counter()
        try:
            results = run_schemes(channels, cfg, bcfg, spec.schemes, spec.asy_warm_start)
        except Exception as exc:  # noqa: BLE001 - recorded in-row
            log.exception("run failed at %s=%s trial %d", spec.parameter, value, trial)
            err = f"{type(exc).__name__}: {exc}"
            rows.extend(_error_row(s, baseline, value, trial, seed, err) for s in spec.schemes)
            continue
        elapsed = time.perf_counter() - start
        for s in spec.schemes:
            r = results[s]
            rows.append(
                ResultRow(
                    scheme=s,
                    baseline=baseline,
                    value=float(value),
                    trial=trial,
                    seed=seed,
                    sum_throughput=r.sum_throughput,
                    total_energy=r.total_energy,
                    iterations=r.iterations,
                    converged=r.converged,
                    wall_time=r.wall_time if record_timing else float("nan"),
                    error="" if r.feasibility.passed else "infeasible result",
                )
            )
        log.debug("%s=%s trial %d %s done in %.2fs", spec.parameter, value, trial, baseline, elapsed)
    return rows


def _error_row(scheme, baseline, value, trial, seed, err) -> ResultRow:
    nan = float("nan")
    return ResultRow(scheme, baseline, float(value), trial, seed, nan, nan, 0, False, nan, err)


def run_sweep(
    spec: SweepSpec, opt_cfg: OptimizerConfig | None = None, workers: int = 1, record_timing: bool = False
) -> list[ResultRow]:
    """One row per (value, trial, baseline, scheme), in that nesting order.

    Every scheme and baseline of a (value, trial) pair sees the same channel
    set. ``wall_time`` is NaN unless ``record_timing`` is set, so that output
    files are a pure function of the inputs.
    """
    opt_cfg = opt_cfg or OptimizerConfig()
    jobs = [(value, trial) for value in spec.values for trial in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_trial_rows, *zip(*[(spec, opt_cfg, v, t, record_timing) for v, t in jobs])))
    else:
        chunks = [_trial_rows(spec, opt_cfg, v, t, record_timing) for v, t in jobs]
    return [row for chunk in chunks for row in chunk]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if x != x else repr(x)
    return str(x)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(path, rows: list[ResultRow]) -> None:
    Path(path).write_text(rows_to_csv(rows))


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mean_by(rows: list[ResultRow], field_name: str = "sum_throughput") -> dict[tuple[str, str, float], float]:
    """Mean of ``field_name`` per (scheme, baseline, value), skipping failed rows."""
    acc: dict[tuple[str, str, float], list[float]] = {}
    for r in rows:
        if r.error:
            continue
        acc.setdefault((r.scheme, r.baseline, r.value), []).append(getattr(r, field_name))
    return {k: sum(v) / len(v) for k, v in acc.items()}


def load_sweep_file(path) -> tuple[SweepSpec, OptimizerConfig]:
    """Sweep spec JSON; an optional ``optimizer`` object sets OptimizerConfig fields."""
    data = json.loads(Path(path).read_text())
    opt = data.pop("optimizer", {}) or {}
    return SweepSpec.from_dict(data), optimizer_config_from_dict(opt)


def optimizer_config_from_dict(data: dict[str, Any]) -> OptimizerConfig:
    allowed = {f.name for f in dataclasses.fields(OptimizerConfig)} - {"warm_start"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown optimizer fields {sorted(unknown)}")
    return OptimizerConfig(**data)
