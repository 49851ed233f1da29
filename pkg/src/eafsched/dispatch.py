"""Dispatch logs shared by every policy, and their replay through the plant model."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .plant import FurnaceState, PlantConfig, StepDecision, step_plant

UNIT_COLUMNS = ("u", "v", "y", "r", "k", "i", "P", "m", "s")


@dataclass
class DispatchLog:
    """Per step and unit decisions, flows and stocks of one simulated run.

    ``m``/``s`` are the stocks seen by the unit at that step (after the
    lagged update and the charge). ``profit`` is per step and plant-wide.
    ``cost_basis`` and ``check_rates`` record how the run was settled so
    :func:`replay` can redo it.
    """

    policy: str
    prices: np.ndarray
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    r: np.ndarray
    k: np.ndarray
    i: np.ndarray
    P: np.ndarray
    m: np.ndarray
    s: np.ndarray
    profit: np.ndarray
    cost_basis: str = "input"
    check_rates: bool = True
    initial: tuple[FurnaceState, ...] | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, policy: str, prices, n_units: int, **kw) -> "DispatchLog":
        T = len(prices)
        z = lambda dt=float: np.zeros((T, n_units), dtype=dt)  # noqa: E731
        return cls(policy, np.asarray(prices, float).copy(), z(int), z(int), z(int), z(), z(), z(), z(), z(), z(),
                   np.zeros(T), **kw)

    @property
    def n_steps(self) -> int:
        return len(self.prices)

    @property
    def n_units(self) -> int:
        return self.u.shape[1]

    @property
    def total_profit(self) -> float:
        return float(self.profit.sum())

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.profit)

    @property
    def startups(self) -> int:
        return int(self.y.sum())

    @property
    def utilization(self) -> float:
        """Share of unit-steps with the furnace on."""
        return float(self.u.mean()) if self.u.size else 0.0

    def daily_profits(self, steps_per_day: int = 288) -> np.ndarray:
        n = -(-self.n_steps // steps_per_day)
        return np.array([self.profit[d * steps_per_day:(d + 1) * steps_per_day].sum() for d in range(n)])

    def daily_variance(self, steps_per_day: int = 288) -> float:
        d = self.daily_profits(steps_per_day)
        return float(d.var()) if len(d) else 0.0

    def record(self, t: int, outcome, price: float):
        for col, fl, st in zip(range(self.n_units), outcome.flows, outcome.states):
            self.u[t, col], self.v[t, col], self.y[t, col] = fl.u, fl.v, fl.y
            self.r[t, col], self.k[t, col], self.i[t, col], self.P[t, col] = fl.r, fl.k, fl.i, fl.P
            self.m[t, col], self.s[t, col] = st.m, st.s
        self.prices[t] = price
        self.profit[t] = outcome.profit

    def decisions(self, t: int) -> list[StepDecision]:
        return [StepDecision(int(self.y[t, c]), int(self.u[t, c]), int(self.v[t, c]),
                             float(self.r[t, c]), float(self.k[t, c])) for c in range(self.n_units)]

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "steps": self.n_steps,
            "units": self.n_units,
            "profit": self.total_profit,
            "startups": self.startups,
            "utilization": self.utilization,
            "daily_profit_variance": self.daily_variance(),
            "cost_basis": self.cost_basis,
            **{k: v for k, v in self.info.items() if not k.startswith("_") and isinstance(v, (int, float, str, bool))},
        }

    def to_csv(self, path: str | Path) -> Path:
        """One row per (step, unit); price and step profit repeat across a step's rows."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "unit", *UNIT_COLUMNS, "price", "step_profit"])
            for t in range(self.n_steps):
                for c in range(self.n_units):
                    row = [int(getattr(self, name)[t, c]) if name in ("u", "v", "y")
                           else repr(float(getattr(self, name)[t, c])) for name in UNIT_COLUMNS]
                    w.writerow([t, c, *row, repr(float(self.prices[t])), repr(float(self.profit[t]))])
        return path

    def write_summary(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path


def read_dispatch_csv(path: str | Path, policy: str = "", cost_basis: str = "input", check_rates: bool = True) -> DispatchLog:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    T = max(int(r["step"]) for r in rows) + 1
    N = max(int(r["unit"]) for r in rows) + 1
    log = DispatchLog.empty(policy, np.zeros(T), N, cost_basis=cost_basis, check_rates=check_rates)
    for r in rows:
        t, c = int(r["step"]), int(r["unit"])
        for name in UNIT_COLUMNS:
            getattr(log, name)[t, c] = float(r[name])
        log.prices[t] = float(r["price"])
        log.profit[t] = float(r["step_profit"])
    return log


@dataclass
class ReplayResult:
    profit: np.ndarray
    max_profit_error: float
    max_stock_error: float
    final_states: tuple[FurnaceState, ...]

    @property
    def total(self) -> float:
        return float(self.profit.sum())


def replay(log: DispatchLog, plant: PlantConfig) -> ReplayResult:
    """Re-simulate the logged decisions through the plant model.

    Raises if any logged decision is infeasible; otherwise returns the
    recomputed step profits and the largest deviations from the log.
    """
    states = tuple(log.initial) if log.initial is not None else tuple(FurnaceState() for _ in plant.units)
    profit = np.zeros(log.n_steps)
    stock_err = 0.0
    for t in range(log.n_steps):
        out = step_plant(states, log.decisions(t), plant, float(log.prices[t]),
                         check_rates=log.check_rates, cost_basis=log.cost_basis)
        profit[t] = out.profit
        for c, st in enumerate(out.states):
            stock_err = max(stock_err, abs(st.m - log.m[t, c]), abs(st.s - log.s[t, c]))
        states = out.states
    err = float(np.max(np.abs(profit - log.profit), initial=0.0))
    return ReplayResult(profit, err, stock_err, states)
