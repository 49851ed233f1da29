"""Experiment runner: baseline, Q-learning and rolling MILP on shared data.

Reports are plain files: dispatch logs and cumulative profits as CSV,
summaries as JSON with sorted keys. Wall-clock times go to a separate
``timings.json`` so every other file is byte-identical for a fixed seed.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import FixedCycleSpec, UnitCycle, run_fixed
from .dispatch import DispatchLog, replay
from .plant import PlantConfig, heterogeneous_plant, homogeneous_plant, load_plant
from .prices import STEPS_PER_DAY, PriceSeries, align_series, load_price_csv, synth_prices
from .qlearning import QTable, RLConfig, evaluate, train, write_td_csv
from .rolling import RollingConfig, run_rolling

log = logging.getLogger(__name__)

POLICIES = ("baseline", "qlearning", "milp")


class ConfigError(ValueError):
    pass


@dataclass
class PriceSource:
    """Either a synthetic series or DAP/RTP files (optionally a separate test year)."""

    synthetic_days: int | None = None
    synthetic_seed: int | None = None  # defaults to the experiment seed
    dap: str | None = None
    rtp: str | None = None
    dap_test: str | None = None
    rtp_test: str | None = None

    def validate(self):
        files = [self.dap, self.rtp]
        if self.synthetic_days is not None:
            if any(f is not None for f in files + [self.dap_test, self.rtp_test]):
                raise ConfigError("give either a synthetic source or price files, not both")
            if self.synthetic_days < 1:
                raise ConfigError("synthetic_days must be >= 1")
            return
        if self.dap is None or self.rtp is None:
            raise ConfigError("exactly one DAP and one RTP source are required")
        if (self.dap_test is None) != (self.rtp_test is None):
            raise ConfigError("a test year needs both DAP and RTP files")
        for f in files + [self.dap_test, self.rtp_test]:
            if f is not None and not Path(f).exists():
                raise ConfigError(f"price file not found: {f}")


@dataclass
class ExperimentConfig:
    plant: str = "homogeneous"  # "homogeneous", "heterogeneous" or a plant file path
    prices: PriceSource = field(default_factory=lambda: PriceSource(synthetic_days=60))
    seed: int = 0
    out: str = "out"
    train_fraction: float = 0.7
    rl: RLConfig = field(default_factory=RLConfig)
    rolling: RollingConfig = field(default_factory=RollingConfig)
    baseline_offsets: tuple[int, ...] | None = None
    baseline_stop: int = 0

    def validate(self):
        self.prices.validate()
        if self.plant not in ("homogeneous", "heterogeneous") and not Path(self.plant).exists():
            raise ConfigError(f"plant file not found: {self.plant}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")

    def load_plant(self) -> PlantConfig:
        if self.plant == "homogeneous":
            return homogeneous_plant()
        if self.plant == "heterogeneous":
            return heterogeneous_plant()
        return load_plant(self.plant)

    def baseline_spec(self, plant: PlantConfig) -> FixedCycleSpec:
        if self.baseline_offsets is None:
            spec = FixedCycleSpec.default(plant.n_units)
            return FixedCycleSpec(tuple(UnitCycle(c.melt, c.tap, self.baseline_stop, c.offset) for c in spec.units))
        if len(self.baseline_offsets) != plant.n_units:
            raise ConfigError("one baseline offset per unit is required")
        return FixedCycleSpec(tuple(UnitCycle(stop=self.baseline_stop, offset=o) for o in self.baseline_offsets))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rolling"].pop("options", None)
        return d


def _build(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    return cls(**data)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read an experiment config (JSON); keyword overrides win over the file."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        prices = _build(PriceSource, data.pop("prices", {"synthetic_days": 60}), "prices")
        rl = data.pop("rl", {})
        if isinstance(rl.get("kappa"), list):
            rl["kappa"] = tuple(rl["kappa"])
        rl_cfg = _build(RLConfig, rl, "rl")
        rolling = _build(RollingConfig, data.pop("rolling", {}), "rolling")
        if "baseline_offsets" in data and data["baseline_offsets"] is not None:
            data["baseline_offsets"] = tuple(data["baseline_offsets"])
        cfg = _build(ExperimentConfig, {**data, "prices": prices, "rl": rl_cfg, "rolling": rolling}, "experiment")
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    cfg.validate()
    return cfg


@dataclass
class DataSplit:
    dap_train: PriceSeries
    rtp_train: PriceSeries
    dap_test: PriceSeries
    rtp_test: PriceSeries


def _slice(s: PriceSeries, lo: int, hi: int) -> PriceSeries:
    return s.window(lo, hi)


def load_data(cfg: ExperimentConfig) -> DataSplit:
    """Train/test split: the given test year, else a chronological split on whole days."""
    src = cfg.prices
    if src.synthetic_days is not None:
        seed = cfg.seed if src.synthetic_seed is None else src.synthetic_seed
        dap, rtp = synth_prices(seed, src.synthetic_days)
    else:
        dap, rtp = align_series(load_price_csv(src.dap, "DAP"), load_price_csv(src.rtp, "RTP"))
        if src.dap_test is not None:
            dt, rt = align_series(load_price_csv(src.dap_test, "DAP"), load_price_csv(src.rtp_test, "RTP"))
            if len(dt) == 0:
                raise ConfigError("empty test split")
            return DataSplit(dap, rtp, dt, rt)
    days = len(dap) // STEPS_PER_DAY
    n_train = int(round(cfg.train_fraction * days))
    if n_train < 1 or n_train >= days:
        raise ConfigError(f"cannot split {days} days into non-empty train and test parts")
    cut = n_train * STEPS_PER_DAY
    end = days * STEPS_PER_DAY
    return DataSplit(_slice(dap, 0, cut), _slice(rtp, 0, cut), _slice(dap, cut, end), _slice(rtp, cut, end))


@dataclass
class CompareReport:
    logs: dict[str, DispatchLog]
    table: list[dict]
    timings: dict[str, float]
    out: Path | None = None
    td_trace: np.ndarray | None = None
    qtable: QTable | None = None


def summary_table(logs: dict[str, DispatchLog]) -> list[dict]:
    """Rows per policy, computed from the dispatch logs alone."""
    base = logs["baseline"].total_profit if "baseline" in logs else None
    milp = logs["milp"].total_profit if "milp" in logs else None
    rows = []
    for name in POLICIES:
        if name not in logs:
            continue
        lg = logs[name]
        p = lg.total_profit
        rows.append({
            "policy": name,
            "profit": p,
            "uplift_vs_baseline": None if base is None else p - base,
            "share_of_milp": None if not milp else p / milp,
            "startups": lg.startups,
            "utilization": lg.utilization,
            "daily_profit_variance": lg.daily_variance(),
        })
    return rows


def _write_table(rows: list[dict], path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _write_cumulative(logs: dict[str, DispatchLog], path: Path):
    names = [n for n in POLICIES if n in logs]
    cols = [logs[n].cumulative for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", *names])
        for t in range(len(cols[0])):
            w.writerow([t, *(repr(float(c[t])) for c in cols)])


def run_compare(cfg: ExperimentConfig, policies: Sequence[str] = POLICIES, write: bool = True) -> CompareReport:
    """Run the selected policies on the test split and write the report files.

    Artifacts of policies that finished are kept if a later one fails.
    """
    plant = cfg.load_plant()
    data = load_data(cfg)
    out = Path(cfg.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    logs: dict[str, DispatchLog] = {}
    timings: dict[str, float] = {}
    report = CompareReport(logs, [], timings, out if write else None)

    def finish(name: str, lg: DispatchLog, started: float):
        timings[name] = time.perf_counter() - started
        logs[name] = lg
        if write:
            lg.to_csv(out / f"dispatch_{name}.csv")
            lg.write_summary(out / f"summary_{name}.json")

    try:
        if "baseline" in policies:
            t0 = time.perf_counter()
            finish("baseline", run_fixed(plant, data.rtp_test, cfg.baseline_spec(plant)), t0)
        if "qlearning" in policies:
            t0 = time.perf_counter()
            rl = RLConfig(**{**asdict(cfg.rl), "seed": cfg.seed})
            res = train(plant, data.dap_train, rl)
            ev = evaluate(res.table, data.dap_test, data.rtp_test, plant)
            report.td_trace, report.qtable = res.td, res.table
            if write:
                res.table.save(out / "qtable.csv")
                if len(res.td) >= 9:
                    write_td_csv(res.td, out / "td_trace.csv")
            finish("qlearning", ev.log, t0)
        if "milp" in policies:
            t0 = time.perf_counter()
            rc = cfg.rolling
            if write and rc.checkpoint_dir is None:
                rc = RollingConfig(**{**{f.name: getattr(rc, f.name) for f in fields(rc)},
                                      "checkpoint_dir": str(out / "checkpoints")})
            finish("milp", run_rolling(plant, data.rtp_test, rc), t0)
    finally:
        report.table = summary_table(logs)
        if write and logs:
            _write_table(report.table, out / "summary.csv")
            _write_cumulative(logs, out / "cumulative.csv")
            (out / "report.json").write_text(json.dumps({
                "plant": cfg.plant,
                "seed": cfg.seed,
                "test_steps": len(data.rtp_test),
                "train_steps": len(data.dap_train),
                "policies": report.table,
            }, indent=2, sort_keys=True) + "\n")
            (out / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    return report


def run_hetero(cfg: ExperimentConfig, **kw) -> CompareReport:
    """Comparison on the three-unit heterogeneous plant."""
    c = ExperimentConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)}, "plant": "heterogeneous"})
    return run_compare(c, **kw)


def run_kappa_sweep(cfg: ExperimentConfig, kappas: Sequence[float], write: bool = True) -> list[dict]:
    """One train and test evaluation per κ with the experiment seed."""
    plant = cfg.load_plant()
    data = load_data(cfg)
    rows = []
    for k in kappas:
        rl = RLConfig(**{**asdict(cfg.rl), "kappa": float(k), "seed": cfg.seed})
        res = train(plant, data.dap_train, rl)
        ev = evaluate(res.table, data.dap_test, data.rtp_test, plant)
        rows.append({"kappa": float(k), "profit": ev.profit, "startups": ev.startups,
                     "utilization": ev.utilization})
    if write and rows:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_table(rows, out / "kappa_sweep.csv")
    return rows


def emit_convergence(trace, path: str | Path, window: int = 9) -> Path:
    """Write (step, |δ|, rolling median) for plotting elsewhere."""
    trace = np.asarray(trace, dtype=float)
    if trace.size == 0:
        raise ValueError("empty TD trace")
    return write_td_csv(trace, path, window=min(window, len(trace)))


def check_replay(logs: dict[str, DispatchLog], plant: PlantConfig) -> dict[str, float]:
    """Largest per-step profit deviation when each log is replayed through the plant model."""
    return {name: replay(lg, plant).max_profit_error for name, lg in logs.items()}
