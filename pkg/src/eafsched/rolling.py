"""Rolling-horizon MILP dispatch.

Each window of ``H`` steps is solved with perfect foresight of its prices,
the first ``S`` decisions are pushed through the plant model, and the
resulting plant state becomes the next window's boundary.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dispatch import DispatchLog
from .milp.bnb import INFEASIBLE, INFEASIBLE_UNKNOWN, MIPSolution, solve_mip
from .milp.model import BuildOptions, build_window, var_index
from .plant import FurnaceState, PlantConfig, StepDecision, Variant, step_plant

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RollingConfig:
    horizon: int = 48
    step: int = 12
    gap: float = 1e-4
    node_limit: int = 60
    time_limit: float | None = None  # seconds per window, on top of the node limit
    checkpoint_dir: str | None = None
    lp_engine: str = "auto"
    warm_start: bool = True
    options: BuildOptions = field(default_factory=BuildOptions)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 1 <= self.step <= self.horizon:
            raise ValueError("step must satisfy 1 <= S <= H")
        if self.gap < 0 or self.node_limit < 1:
            raise ValueError("gap must be >= 0 and node limit >= 1")


@dataclass
class WindowRecord:
    index: int
    start: int
    length: int
    status: str
    objective: float
    gap: float
    nodes: int
    retried: bool = False
    skipped: bool = False


def _decisions(x, t: int, n_units: int) -> list[StepDecision]:
    out = []
    for i in range(n_units):
        y, u, v = (int(round(x[var_index(kind, i, t, n_units)])) for kind in ("y", "u", "v"))
        r = max(float(x[var_index("r", i, t, n_units)]), 0.0)
        k = max(float(x[var_index("k", i, t, n_units)]), 0.0)
        out.append(StepDecision(y, u, v, r, k))
    return out


def _clip_to_stock(decisions, states, plant):
    """Trim LP round-off so rates never exceed the stocks the plant will see."""
    out = []
    for d, st, p in zip(decisions, states, plant.units):
        charged = p.batch_size * d.y
        if plant.variant is Variant.PHYSICAL:
            m = st.m + st.k_prev - st.r_prev
            s = st.s + charged - st.k_prev
            k, r = min(d.k, max(s, 0.0)), min(d.r, max(m, 0.0))
        else:
            m = st.m + charged - st.k_prev
            s = st.s + charged - st.r_prev
            k, r = min(d.k, max(m, 0.0)), min(d.r, max(s, 0.0))
        k = min(k, p.max_melt_rate * d.v)
        r = min(r, p.max_tap_rate * d.u)
        out.append(StepDecision(d.y, d.u, d.v, r, k))
    return out


def write_checkpoint(directory: str | Path, window: int, start: int, boundary: Sequence[FurnaceState],
                     cumulative: float, reason: str) -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    f = path / f"window_{window:05d}.json"
    f.write_text(json.dumps({
        "window": window,
        "start_step": start,
        "cumulative_profit": cumulative,
        "reason": reason,
        "boundary": [asdict(b) for b in boundary],
    }, indent=2) + "\n")
    return f


def read_checkpoint(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text())
    data["boundary"] = [FurnaceState(**b) for b in data["boundary"]]
    return data


def _shift_initial(model, x_prev, shift: int, n_units: int) -> np.ndarray:
    """Binaries of the previous window moved ``shift`` steps earlier, idle after."""
    vals = np.zeros(model.n_vars)
    H = model.horizon
    H_prev = len(x_prev) // (n_units * 9)
    for t in range(H):
        tp = t + shift
        if tp >= H_prev:
            break
        for i in range(n_units):
            for kind in ("u", "v", "y"):
                vals[var_index(kind, i, t, n_units)] = x_prev[var_index(kind, i, tp, n_units)]
    return vals[model.binary_index]


def run_rolling(plant: PlantConfig, prices, config: RollingConfig | None = None,
                initial: Sequence[FurnaceState] | None = None) -> DispatchLog:
    """Rolling-horizon MILP over ``prices``; returns the committed dispatch."""
    cfg = config or RollingConfig()
    lam = np.asarray(getattr(prices, "values", prices), dtype=float)
    T = len(lam)
    if T < 1:
        raise ValueError("empty price series")
    N = plant.n_units
    states = tuple(initial) if initial is not None else tuple(FurnaceState() for _ in range(N))
    out = DispatchLog.empty("milp", lam, N, cost_basis=cfg.options.cost_basis, check_rates=True,
                            initial=states)
    windows: list[WindowRecord] = []
    t0 = 0
    k = 0
    prev_x = None
    started = time.perf_counter()
    while t0 < T:
        H = min(cfg.horizon, T - t0)
        S = min(cfg.step, H)
        model = build_window(plant, lam[t0:t0 + H], states, H, cfg.options)
        init = _shift_initial(model, prev_x, cfg.step, N) if (cfg.warm_start and prev_x is not None) else None
        sol = solve_mip(model, cfg.gap, cfg.node_limit, cfg.lp_engine, cfg.time_limit, initial=init)
        rec = WindowRecord(k, t0, H, sol.status, sol.objective, sol.gap, sol.nodes)
        if sol.status in (INFEASIBLE, INFEASIBLE_UNKNOWN):
            if cfg.checkpoint_dir:
                write_checkpoint(cfg.checkpoint_dir, k, t0, states, out.total_profit, sol.status)
            sol = solve_mip(model, 2 * cfg.gap, cfg.node_limit, cfg.lp_engine, cfg.time_limit)
            rec.retried = True
            rec.status = sol.status
        if not sol.has_solution:
            log.warning("window %d at step %d: no solution (%s); committing idle steps", k, t0, sol.status)
            rec.skipped = True
            decisions_by_step = [[StepDecision()] * N for _ in range(S)]
            prev_x = None
        else:
            decisions_by_step = [_decisions(sol.x, t, N) for t in range(S)]
            prev_x = sol.x
        for t in range(S):
            decs = _clip_to_stock(decisions_by_step[t], states, plant)
            outcome = step_plant(states, decs, plant, float(lam[t0 + t]), check_rates=True,
                                 cost_basis=cfg.options.cost_basis)
            out.record(t0 + t, outcome, float(lam[t0 + t]))
            states = outcome.states
        windows.append(rec)
        t0 += S
        k += 1
    out.info.update({
        "windows": len(windows),
        "node_limited_windows": sum(w.status == "node_limit" for w in windows),
        "skipped_windows": sum(w.skipped for w in windows),
        "horizon": cfg.horizon,
        "step": cfg.step,
    })
    out.info["window_records"] = windows
    out.info["_seconds"] = time.perf_counter() - started
    return out


def solve_full_horizon(plant: PlantConfig, prices, config: RollingConfig | None = None) -> MIPSolution:
    """One-shot MIP over the whole series (the ``H = S = T`` case)."""
    cfg = config or RollingConfig()
    lam = np.asarray(getattr(prices, "values", prices), dtype=float)
    model = build_window(plant, lam, None, len(lam), cfg.options)
    return solve_mip(model, cfg.gap, cfg.node_limit, cfg.lp_engine, cfg.time_limit)
