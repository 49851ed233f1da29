"""Tabular Q-learning over joint furnace start decisions.

Each furnace runs a fixed cycle template: 12 melt steps, 4 tap steps and
one idle step (a startup needs the unit idle in the previous step). The
state is the day-ahead price bucket plus, per unit, a counter τ: 0 when
idle, 1..L−1 for the active steps still to run, and L for the idle step a
furnace must sit out before it may be charged again. The action chooses
which idle units start now. Starts that
would push the projected plant load over the cap at any step are masked.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import median_filter

from .dispatch import DispatchLog
from .plant import FurnaceParams, FurnaceState, PlantConfig, StepDecision, step_plant
from .prices import N_BUCKETS, PriceBucketizer, bucketize_series

TIE_TOL = 1e-9
QTABLE_VERSION = 1


@dataclass(frozen=True)
class CycleTemplate:
    """Per-step pattern of one furnace cycle, plus the trailing idle step."""

    melt_steps: int = 12
    tap_steps: int = 4

    @property
    def length(self) -> int:
        """Active steps L (melt + tap)."""
        return self.melt_steps + self.tap_steps

    def energy(self, p: FurnaceParams) -> np.ndarray:
        """P̄ over indices 0..L (index L is the idle step)."""
        e = np.zeros(self.length + 1)
        e[: self.melt_steps] = p.base_energy + p.melt_energy
        e[self.melt_steps : self.length] = p.base_energy
        return e

    def output(self, p: FurnaceParams) -> np.ndarray:
        r = np.zeros(self.length + 1)
        r[self.melt_steps : self.length] = p.batch_size / self.tap_steps
        return r

    def melt(self, p: FurnaceParams) -> np.ndarray:
        k = np.zeros(self.length + 1)
        k[: self.melt_steps] = p.batch_size / self.melt_steps
        return k

    def decision(self, idx: int, p: FurnaceParams) -> StepDecision:
        """Plant decision when executing template index ``idx``."""
        if idx >= self.length:
            return StepDecision()
        melting = idx < self.melt_steps
        return StepDecision(
            y=int(idx == 0), u=1, v=int(melting),
            r=float(self.output(p)[idx]), k=float(self.melt(p)[idx]),
        )

    def cycle_energy(self, p: FurnaceParams) -> float:
        return float(self.energy(p).sum())


DEFAULT_TEMPLATE = CycleTemplate()


@dataclass(frozen=True)
class EnvState:
    z: int
    tau: tuple[int, ...]


class StateCodec:
    """Bijection between (z, τ) and a dense index: z·(L+1)^N + Σ τ_i·(L+1)^i."""

    def __init__(self, n_units: int, L: int = DEFAULT_TEMPLATE.length, n_buckets: int = N_BUCKETS):
        self.n_units, self.L, self.n_buckets = n_units, L, n_buckets
        self.base = L + 1
        self.n_tau = self.base**n_units
        self.n_states = n_buckets * self.n_tau
        self.weights = self.base ** np.arange(n_units)

    def tau_index(self, tau: Sequence[int]) -> int:
        return int(np.dot(tau, self.weights))

    def encode(self, state: EnvState) -> int:
        if not 0 <= state.z < self.n_buckets or any(not 0 <= x <= self.L for x in state.tau):
            raise ValueError(f"state out of range: {state}")
        return state.z * self.n_tau + self.tau_index(state.tau)

    def decode(self, index: int) -> EnvState:
        if not 0 <= index < self.n_states:
            raise ValueError(f"state index {index} out of range")
        z, rest = divmod(index, self.n_tau)
        tau = []
        for _ in range(self.n_units):
            rest, t = divmod(rest, self.base)
            tau.append(t)
        return EnvState(z, tuple(tau))


def action_bits(a: int, n_units: int) -> tuple[int, ...]:
    return tuple((a >> i) & 1 for i in range(n_units))


def action_index(bits: Sequence[int]) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


class TemplateEnv:
    """Template dynamics, feasibility masks and rewards for a plant."""

    def __init__(self, plant: PlantConfig, template: CycleTemplate = DEFAULT_TEMPLATE):
        self.plant = plant
        self.template = template
        self.N = plant.n_units
        self.L = template.length
        self.codec = StateCodec(self.N, self.L)
        self.n_actions = 2**self.N
        self.P = np.array([template.energy(p) for p in plant.units])  # (N, L+1)
        self.R = np.array([template.output(p) for p in plant.units])
        self.active = np.zeros(self.L + 1)
        self.active[: self.L] = 1.0
        self.margin = np.array([p.sell_price * p.yield_ratio - p.proc_cost for p in plant.units])
        self.delta = np.array([p.startup_cost for p in plant.units])
        self.bits = np.array([action_bits(a, self.N) for a in range(self.n_actions)], dtype=int)
        self.taus = np.array(list(itertools.product(range(self.L + 1), repeat=self.N)))[:, ::-1]
        # row q of self.taus has tau_index q
        order = self.taus @ self.codec.weights
        self.taus = self.taus[np.argsort(order)]
        self.mask = self._build_mask()
        L = self.L
        nxt_run = np.where(self.taus == 0, 0, np.where(self.taus == 1, L, np.where(self.taus == L, 0, self.taus - 1)))
        nxt = np.where(self.bits[None, :, :] == 1, L - 1, nxt_run[:, None, :])
        self.next_tau = (nxt @ self.codec.weights).astype(np.int64)
        # template index executed per (tau index, action, unit); L is the idle step, -1 nothing
        exe = np.where(self.taus == 0, -1, np.where(self.taus == L, L, L - self.taus))
        self.executed = np.where(self.bits[None, :, :] == 1, 0, exe[:, None, :])

    def _build_mask(self) -> np.ndarray:
        L, N = self.L, self.N
        horizon = L
        # projected load of a running unit with counter tau over the next L steps
        running = np.zeros((N, L + 1, horizon))
        for i in range(N):
            for tau in range(1, L):
                for j in range(tau):
                    running[i, tau, j] = self.P[i, L - tau + j]
        start = self.P[:, :horizon]
        mask = np.zeros((len(self.taus), self.n_actions), dtype=bool)
        batch = np.array([p.batch_size for p in self.plant.units])
        for q, tau in enumerate(self.taus):
            base = sum(running[i, tau[i]] for i in range(N))
            # starting nothing never adds load, even in states no policy reaches
            mask[q, 0] = True
            for a in range(1, self.n_actions):
                b = self.bits[a]
                if np.any((b == 1) & (tau != 0)):
                    continue
                load = base + (b[:, None] * start).sum(axis=0)
                if load.max() > self.plant.power_cap + 1e-9:
                    continue
                if self.plant.feed_cap is not None and batch @ b > self.plant.feed_cap + 1e-9:
                    continue
                mask[q, a] = True
        return mask

    def settlement_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """Per (τ index, action): settled profit excluding energy, and energy drawn (MWh).

        Matches the plant's input cost basis: processing and startup costs
        fall on the charging step.
        """
        rev = np.zeros(self.executed.shape[:2])
        energy = np.zeros(self.executed.shape[:2])
        gross = np.array([p.sell_price * p.yield_ratio for p in self.plant.units])
        charge = np.array([p.proc_cost * p.batch_size + p.startup_cost for p in self.plant.units])
        for i in range(self.N):
            idx = self.executed[:, :, i]
            on = idx >= 0
            safe = np.where(on, idx, 0)
            rev += np.where(on, gross[i] * self.R[i, safe], 0.0) - np.where(idx == 0, charge[i], 0.0)
            energy += np.where(on, self.P[i, safe], 0.0)
        return rev, energy

    def feasible(self, tau_idx: int) -> np.ndarray:
        return np.flatnonzero(self.mask[tau_idx])

    def step_reward(self, tau_idx: int, a: int, price: float, kappa: np.ndarray) -> float:
        """Shaped reward: margin on tapped tons, energy at ``price``, startup cost spread over κ steps."""
        total = 0.0
        for i in range(self.N):
            idx = self.executed[tau_idx, a, i]
            if idx < 0:
                continue
            total += (self.margin[i] * self.R[i, idx] - price * self.P[i, idx]
                      - self.delta[i] / kappa[i] * self.active[idx])
        return total

    def lookahead(self, a: int, forecast: np.ndarray) -> float:
        """Template value of the starts in ``a`` against ``forecast`` (length L)."""
        total = 0.0
        for i in np.flatnonzero(self.bits[a]):
            total += (self.margin[i] * self.R[i, : self.L].sum() - forecast @ self.P[i, : self.L]
                      - self.delta[i])
        return float(total)


def feasible_actions(state: EnvState, plant: PlantConfig, env: TemplateEnv | None = None) -> list[tuple[int, ...]]:
    env = env or TemplateEnv(plant)
    q = env.codec.tau_index(state.tau)
    return [tuple(int(b) for b in env.bits[a]) for a in env.feasible(q)]


def shaped_reward(flows, price_dap: float, kappa, plant: PlantConfig, active: Sequence[bool]) -> float:
    """Σ_i (πα r − C r − λ P − (δ/κ)·active) over units, for one step of ``flows``."""
    kap = np.broadcast_to(np.asarray(kappa, dtype=float), (plant.n_units,))
    total = 0.0
    for f, p, k, act in zip(flows, plant.units, kap, active):
        total += ((p.sell_price * p.yield_ratio - p.proc_cost) * f.r - price_dap * f.P
                  - p.startup_cost / k * (1.0 if act else 0.0))
    return total


@dataclass
class RLConfig:
    eta: float = 0.1
    gamma: float = 0.99
    eps0: float = 1.0
    eps_decay: float = 0.995
    eps_min: float = 0.05
    episodes: int = 600
    kappa: float | tuple[float, ...] = 13.0
    seed: int = 0
    lookahead_ties: bool = True

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if np.any(np.asarray(self.kappa, dtype=float) < 1):
            raise ValueError("kappa must be >= 1")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")


@dataclass
class QTable:
    q: np.ndarray  # (n_states, n_actions)
    visits: np.ndarray
    n_units: int
    bucketizer: PriceBucketizer
    config: RLConfig = field(default_factory=RLConfig)

    @classmethod
    def zeros(cls, n_units: int, bucketizer: PriceBucketizer, config: RLConfig | None = None) -> "QTable":
        codec = StateCodec(n_units)
        shape = (codec.n_states, 2**n_units)
        return cls(np.zeros(shape), np.zeros(shape, dtype=np.int64), n_units, bucketizer, config or RLConfig())

    def save(self, path: str | Path) -> Path:
        """Structured text: a JSON header line, then ``state,action,value,visits`` rows for visited entries."""
        path = Path(path)
        cfg = asdict(self.config)
        header = {
            "version": QTABLE_VERSION, "n_units": self.n_units, "shape": list(self.q.shape),
            "bucketizer": {"thresholds": list(self.bucketizer.thresholds), "theta": self.bucketizer.theta},
            "config": cfg,
        }
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["state", "action", "value", "visits"])
            for s, a in zip(*np.nonzero((self.visits > 0) | (self.q != 0))):
                w.writerow([int(s), int(a), repr(float(self.q[s, a])), int(self.visits[s, a])])
        return path

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise ValueError(f"{path}: missing Q-table header")
            header = json.loads(first[2:])
            if header.get("version") != QTABLE_VERSION:
                raise ValueError(f"{path}: unsupported Q-table version {header.get('version')}")
            cfg = header["config"]
            if isinstance(cfg.get("kappa"), list):
                cfg["kappa"] = tuple(cfg["kappa"])
            bz = PriceBucketizer(tuple(header["bucketizer"]["thresholds"]), header["bucketizer"]["theta"])
            table = cls(np.zeros(header["shape"]), np.zeros(header["shape"], dtype=np.int64),
                        header["n_units"], bz, RLConfig(**cfg))
            for row in csv.DictReader(fh):
                s, a = int(row["state"]), int(row["action"])
                table.q[s, a] = float(row["value"])
                table.visits[s, a] = int(row["visits"])
        return table


class MaskedActionError(ValueError):
    pass


def q_update(table: QTable, s: int, a: int, reward: float, s_next: int, plant: PlantConfig | None = None,
             env: TemplateEnv | None = None, eta: float | None = None, gamma: float | None = None) -> float:
    """One tabular update; returns the TD error r + γ max Q(s',·) − Q(s,a).

    The max runs over the actions feasible in ``s_next`` only. ``eta`` and
    ``gamma`` default to the table's config.
    """
    env = env or TemplateEnv(plant)
    n_tau = env.codec.n_tau
    if not env.mask[s % n_tau, a]:
        raise MaskedActionError(f"action {a} is masked in state {s}")
    eta = table.config.eta if eta is None else eta
    gamma = table.config.gamma if gamma is None else gamma
    best = table.q[s_next, env.feasible(s_next % n_tau)].max()
    td = reward + gamma * best - table.q[s, a]
    table.q[s, a] += eta * td
    table.visits[s, a] += 1
    return float(td)


def _forecast(dap: np.ndarray, t: int, L: int) -> np.ndarray:
    idx = np.minimum(np.arange(t, t + L), len(dap) - 1)
    return dap[idx]


def greedy_action(env: TemplateEnv, qrow: np.ndarray, feasible: np.ndarray, dap: np.ndarray, t: int,
                  lookahead_ties: bool = True) -> int:
    """Masked argmax of ``qrow``; ties go to the lookahead, then to the lowest index."""
    vals = qrow[feasible]
    tied = feasible[vals >= vals.max() - TIE_TOL]
    if len(tied) == 1 or not lookahead_ties:
        return int(tied[0])
    fc = _forecast(dap, t, env.L)
    la = np.array([env.lookahead(int(a), fc) for a in tied])
    return int(tied[np.flatnonzero(la >= la.max() - TIE_TOL)[0]])


def lookahead_value(t: int, action: Sequence[int], plant: PlantConfig, forecast) -> float:
    """Template value of starting the units flagged in ``action`` at step ``t`` of ``forecast``."""
    env = TemplateEnv(plant)
    fc = _forecast(np.asarray(forecast, dtype=float), t, env.L)
    return env.lookahead(action_index(action), fc)


@dataclass
class TrainResult:
    table: QTable
    td: np.ndarray
    episodes_days: np.ndarray


def train(plant: PlantConfig, dap_train, config: RLConfig | None = None,
          bucketizer: PriceBucketizer | None = None) -> TrainResult:
    """ε-greedy Q-learning on day-ahead prices, one random day per episode."""
    from .prices import STEPS_PER_DAY, fit_bucketizer

    cfg = config or RLConfig()
    dap = np.asarray(getattr(dap_train, "values", dap_train), dtype=float)
    bz = bucketizer or fit_bucketizer(dap)
    env = TemplateEnv(plant)
    table = QTable.zeros(plant.n_units, bz, cfg)
    kappa = np.broadcast_to(np.asarray(cfg.kappa, dtype=float), (plant.n_units,)).copy()
    zs = bucketize_series(bz, dap)
    n_days = len(dap) // STEPS_PER_DAY
    if n_days < 1 and cfg.episodes > 0:
        raise ValueError("training series shorter than one day")
    rng = np.random.default_rng(cfg.seed)
    n_tau = env.codec.n_tau
    td = np.zeros(cfg.episodes * STEPS_PER_DAY)
    days = np.zeros(cfg.episodes, dtype=int)
    eps = cfg.eps0
    q = table.q
    n = 0
    for ep in range(cfg.episodes):
        d = int(rng.integers(n_days))
        days[ep] = d
        t0 = d * STEPS_PER_DAY
        tau = 0
        for k in range(STEPS_PER_DAY):
            t = t0 + k
            s = int(zs[t]) * n_tau + tau
            feas = env.feasible(tau)
            if rng.random() < eps:
                a = int(feas[rng.integers(len(feas))])
            else:
                a = greedy_action(env, q[s], feas, dap, t, cfg.lookahead_ties)
            r = env.step_reward(tau, a, dap[t], kappa)
            tau_next = int(env.next_tau[tau, a])
            z_next = int(zs[min(t + 1, len(zs) - 1)])
            td[n] = q_update(table, s, a, r, z_next * n_tau + tau_next, env=env)
            n += 1
            tau = tau_next
        eps = max(cfg.eps_min, eps * cfg.eps_decay)
    return TrainResult(table, td, days)


@dataclass
class EvalResult:
    log: DispatchLog
    profit: float
    startups: int
    utilization: float
    daily_variance: float


def evaluate(table: QTable, dap_test, rtp_test, plant: PlantConfig, lookahead_ties: bool | None = None,
             stop_before_end: bool = True) -> EvalResult:
    """Greedy masked policy on day-ahead buckets, settled on real-time prices.

    With ``stop_before_end`` no cycle is started unless its active steps
    finish inside the series. Utilization is the share of unit-steps spent
    in a melt or tap step.
    """
    dap = np.asarray(getattr(dap_test, "values", dap_test), dtype=float)
    rtp = np.asarray(getattr(rtp_test, "values", rtp_test), dtype=float)
    if len(dap) != len(rtp):
        raise ValueError("day-ahead and real-time test series are not aligned")
    for a, b in ((dap_test, rtp_test),):
        if hasattr(a, "start") and hasattr(b, "start") and a.start != b.start:
            raise ValueError("day-ahead and real-time test series start at different times")
    ties = table.config.lookahead_ties if lookahead_ties is None else lookahead_ties
    env = TemplateEnv(plant)
    zs = bucketize_series(table.bucketizer, dap)
    T = len(dap)
    log = DispatchLog.empty("qlearning", rtp, plant.n_units, cost_basis="input", check_rates=False)
    states = tuple(FurnaceState() for _ in plant.units)
    tau = 0
    n_tau = env.codec.n_tau
    active_steps = 0
    for t in range(T):
        feas = env.feasible(tau)
        if stop_before_end and t + env.L > T:
            feas = feas[:1]  # action 0 (no start) is always first and feasible
        s = int(zs[t]) * n_tau + tau
        a = greedy_action(env, table.q[s], feas, dap, t, ties)
        decisions = []
        for i, p in enumerate(plant.units):
            idx = int(env.executed[tau, a, i])
            decisions.append(StepDecision() if idx < 0 else env.template.decision(idx, p))
            active_steps += int(0 <= idx < env.L)
        out = step_plant(states, decisions, plant, float(rtp[t]), check_rates=False, cost_basis="input")
        log.record(t, out, float(rtp[t]))
        states = out.states
        tau = int(env.next_tau[tau, a])
    util = active_steps / max(1, T * plant.n_units)
    log.info["active_utilization"] = util
    return EvalResult(log, log.total_profit, log.startups, util, log.daily_variance())


def td_trace_stats(trace, window: int = 9) -> np.ndarray:
    """Centered rolling median of |δ| (edges use the nearest value)."""
    x = np.abs(np.asarray(trace, dtype=float))
    if window < 1 or len(x) < window:
        raise ValueError(f"trace of length {len(x)} is shorter than the window {window}")
    return median_filter(x, size=window, mode="nearest")


def td_shrink_ratio(trace, window: int = 9, head: float = 0.05, tail: float = 0.10) -> float:
    """Mean rolling median over the last ``tail`` share divided by that over the first ``head`` share."""
    med = td_trace_stats(trace, window)
    n = len(med)
    first = med[: max(1, int(round(head * n)))].mean()
    last = med[n - max(1, int(round(tail * n))):].mean()
    return float(last / first) if first > 0 else float("inf") if last > 0 else 0.0


def write_td_csv(trace, path: str | Path, window: int = 9) -> Path:
    path = Path(path)
    med = td_trace_stats(trace, window)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "td_error", "rolling_median_abs"])
        for k, (d, m) in enumerate(zip(np.asarray(trace, dtype=float), med)):
            w.writerow([k, repr(float(d)), repr(float(m))])
    return path
