"""Window MILP construction.

One window covers ``H`` steps of an ``N``-unit plant. Every unit-step owns
nine variables laid out contiguously as ``KINDS``; rows are kept sparse.

Row count for a window (``couple_vu`` on, no feed cap, no cover rows)::

    N * (10 * H - 1) + H

The first step of each unit has no startup row because the startup logic
against the boundary state becomes a bound on ``y``. The feed cap adds
``H`` rows, and ``cap_covers`` adds ``H`` rows per minimal cover.

Cover rows: a unit that melts draws at least its full load, so any set of
units whose full loads together exceed the power cap cannot all melt in
the same step. For every minimal such set ``S`` the row
``sum(v[i] for i in S) <= |S| - 1`` is added per step. The rows remove no
integer point, but they cut off the fractional "three units each melting
at 90%" solutions that make the plain relaxation weak.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..plant import FurnaceState, PlantConfig, Variant

KINDS = ("i", "r", "k", "m", "s", "P", "u", "v", "y")
NKINDS = len(KINDS)
BINARY_KINDS = ("u", "v", "y")
_KIND_INDEX = {name: j for j, name in enumerate(KINDS)}

LE, EQ, GE = "L", "E", "G"


class ModelError(ValueError):
    pass


BoundaryState = FurnaceState
"""Terminal state carried into a window: stocks, stage flags and last rates."""


@dataclass(frozen=True)
class BuildOptions:
    couple_vu: bool = True
    cap_covers: bool = True
    cost_basis: str = "input"  # "output" charges processing on tapped tons


@dataclass
class WindowModel:
    """Sparse maximisation MILP for one window."""

    names: list[str]
    is_binary: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray  # objective coefficients (maximise)
    A: sp.csr_matrix
    sense: np.ndarray  # one of "L", "E", "G" per row
    rhs: np.ndarray
    row_names: list[str]
    n_units: int = 0
    horizon: int = 0
    variant: Variant = Variant.PHYSICAL
    obj_offset: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def binary_index(self) -> np.ndarray:
        return np.flatnonzero(self.is_binary)

    def var(self, kind: str, unit: int, t: int) -> int:
        return var_index(kind, unit, t, self.n_units)

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float)) + self.obj_offset

    def max_violation(self, x) -> float:
        """Largest violation of bounds and rows at point ``x``."""
        x = np.asarray(x, dtype=float)
        ax = self.A @ x
        viol = np.zeros(self.n_rows)
        le, eq, ge = self.sense == LE, self.sense == EQ, self.sense == GE
        viol[le] = np.maximum(ax[le] - self.rhs[le], 0.0)
        viol[ge] = np.maximum(self.rhs[ge] - ax[ge], 0.0)
        viol[eq] = np.abs(ax[eq] - self.rhs[eq])
        bnd = np.maximum(np.maximum(self.lb - x, x - self.ub), 0.0)
        return float(max(viol.max(initial=0.0), bnd.max(initial=0.0)))

    def with_bounds(self, lb=None, ub=None) -> "WindowModel":
        return WindowModel(
            self.names, self.is_binary,
            self.lb if lb is None else np.asarray(lb, float),
            self.ub if ub is None else np.asarray(ub, float),
            self.c, self.A, self.sense, self.rhs, self.row_names,
            self.n_units, self.horizon, self.variant, self.obj_offset, self.meta,
        )

    def dump(self) -> str:
        """Plain-text listing of variables and rows, for debugging."""
        lines = [f"# window N={self.n_units} H={self.horizon} variant={self.variant.value}"]
        lines.append(f"# {self.n_vars} variables, {self.n_rows} rows, objective offset {self.obj_offset!r}")
        lines.append("VARIABLES")
        for j, name in enumerate(self.names):
            kind = "bin" if self.is_binary[j] else "cont"
            lines.append(f"  {name:<12} {kind:<4} [{self.lb[j]!r}, {self.ub[j]!r}] c={self.c[j]!r}")
        lines.append("ROWS")
        csr = self.A.tocsr()
        for r in range(self.n_rows):
            lo, hi = csr.indptr[r], csr.indptr[r + 1]
            terms = " ".join(f"{csr.data[q]:+g}*{self.names[csr.indices[q]]}" for q in range(lo, hi))
            op = {LE: "<=", EQ: "==", GE: ">="}[self.sense[r]]
            lines.append(f"  {self.row_names[r]:<14} {terms} {op} {self.rhs[r]!r}")
        return "\n".join(lines) + "\n"


def var_index(kind: str, unit: int, t: int, n_units: int) -> int:
    return (t * n_units + unit) * NKINDS + _KIND_INDEX[kind]


def minimal_covers(plant: PlantConfig, couple_vu: bool = True) -> list[tuple[int, ...]]:
    """Minimal unit sets that cannot melt together under the power cap."""
    weight = [p.full_load if couple_vu else p.melt_energy for p in plant.units]
    covers: list[tuple[int, ...]] = []
    for size in range(2, plant.n_units + 1):
        for S in itertools.combinations(range(plant.n_units), size):
            if sum(weight[i] for i in S) <= plant.power_cap + 1e-12:
                continue
            if any(set(c) <= set(S) for c in covers):
                continue
            covers.append(S)
    return covers


def expected_counts(n_units: int, horizon: int, feed_cap: bool = False, couple_vu: bool = True,
                    n_covers: int = 0):
    """(variables, binaries, rows) of a window built with these settings."""
    per_step = 10 if couple_vu else 9
    rows = n_units * (per_step * horizon - 1) + horizon + (horizon if feed_cap else 0) + n_covers * horizon
    return n_units * horizon * NKINDS, n_units * horizon * len(BINARY_KINDS), rows


def _check_boundary(b: FurnaceState, unit: int):
    vals = (b.m, b.s, b.r_prev, b.k_prev)
    if any(not math.isfinite(x) or x < -1e-9 for x in vals):
        raise ModelError(f"unit {unit}: boundary stocks/rates must be finite and >= 0")
    if b.u not in (0, 1) or b.v not in (0, 1):
        raise ModelError(f"unit {unit}: boundary u, v must be binary")
    if b.v and not b.u:
        raise ModelError(f"unit {unit}: boundary has v=1 with u=0")


def build_window(
    plant: PlantConfig,
    prices: Sequence[float],
    boundary: Sequence[FurnaceState] | None = None,
    horizon: int | None = None,
    options: BuildOptions | None = None,
) -> WindowModel:
    """Build the window MILP for ``prices`` (one price per step).

    ``boundary`` gives the state each unit carries in; ``None`` means the
    empty, idle start.
    """
    opts = options or BuildOptions()
    lam = np.asarray(prices, dtype=float)
    H = len(lam) if horizon is None else int(horizon)
    if H < 1 or len(lam) == 0:
        raise ModelError("empty window")
    if len(lam) != H:
        raise ModelError(f"price window has {len(lam)} entries, expected {H}")
    N = plant.n_units
    if N < 1:
        raise ModelError("plant has no units")
    if boundary is None:
        boundary = [FurnaceState()] * N
    if len(boundary) != N:
        raise ModelError("one boundary state per unit required")
    for i, b in enumerate(boundary):
        _check_boundary(b, i)
    physical = plant.variant is Variant.PHYSICAL

    nv = N * H * NKINDS
    names = [""] * nv
    lb = np.zeros(nv)
    ub = np.zeros(nv)
    c = np.zeros(nv)
    is_bin = np.zeros(nv, dtype=bool)

    rows_i: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    sense: list[str] = []
    rhs: list[float] = []
    row_names: list[str] = []

    def add_row(name, terms, op, b):
        r = len(sense)
        for j, a in terms:
            rows_i.append(r)
            cols.append(j)
            vals.append(a)
        sense.append(op)
        rhs.append(b)
        row_names.append(name)

    def V(kind, i, t):
        return var_index(kind, i, t, N)

    for i, (p, b) in enumerate(zip(plant.units, boundary)):
        # total material that can ever be in this unit inside the window
        stock_cap = b.m + b.s + b.r_prev + b.k_prev + p.batch_size * H
        for t in range(H):
            for kind in KINDS:
                j = V(kind, i, t)
                names[j] = f"{kind}[{i},{t}]"
            ub[V("i", i, t)] = p.batch_size
            ub[V("r", i, t)] = p.max_tap_rate
            ub[V("k", i, t)] = p.max_melt_rate
            ub[V("m", i, t)] = stock_cap
            ub[V("s", i, t)] = stock_cap
            ub[V("P", i, t)] = p.full_load
            for kind in BINARY_KINDS:
                is_bin[V(kind, i, t)] = True
                ub[V(kind, i, t)] = 1.0

            processed = V("i", i, t) if opts.cost_basis == "input" else V("r", i, t)
            c[V("r", i, t)] += p.sell_price * p.yield_ratio
            c[processed] -= p.proc_cost
            c[V("P", i, t)] -= lam[t]
            c[V("y", i, t)] -= p.startup_cost

            tag = f"{i}_{t}"
            add_row(f"pow_{tag}", [(V("P", i, t), 1.0), (V("u", i, t), -p.base_energy),
                                   (V("v", i, t), -p.melt_energy)], EQ, 0.0)
            if t == 0:
                ub[V("y", i, t)] = math.floor(1.0 - (b.u + b.v) / 2.0 + 1e-9)
            else:
                add_row(f"start_{tag}", [(V("y", i, t), 1.0), (V("u", i, t - 1), 0.5),
                                         (V("v", i, t - 1), 0.5)], LE, 1.0)
            add_row(f"rcap_{tag}", [(V("r", i, t), 1.0), (V("u", i, t), -p.max_tap_rate)], LE, 0.0)
            add_row(f"kcap_{tag}", [(V("k", i, t), 1.0), (V("v", i, t), -p.max_melt_rate)], LE, 0.0)
            if physical:
                add_row(f"kstk_{tag}", [(V("k", i, t), 1.0), (V("s", i, t), -1.0)], LE, 0.0)
                add_row(f"rstk_{tag}", [(V("r", i, t), 1.0), (V("m", i, t), -1.0)], LE, 0.0)
            else:
                add_row(f"rstk_{tag}", [(V("r", i, t), 1.0), (V("s", i, t), -1.0)], LE, 0.0)
                add_row(f"kstk_{tag}", [(V("k", i, t), 1.0), (V("m", i, t), -1.0)], LE, 0.0)
            add_row(f"feed_{tag}", [(V("i", i, t), 1.0), (V("y", i, t), -p.batch_size)], EQ, 0.0)

            # stock balances with one-step lag on the rates
            if physical:
                if t == 0:
                    add_row(f"mbal_{tag}", [(V("m", i, t), 1.0)], EQ, b.m + b.k_prev - b.r_prev)
                    add_row(f"sbal_{tag}", [(V("s", i, t), 1.0), (V("i", i, t), -1.0)], EQ, b.s - b.k_prev)
                else:
                    add_row(f"mbal_{tag}", [(V("m", i, t), 1.0), (V("m", i, t - 1), -1.0),
                                            (V("k", i, t - 1), -1.0), (V("r", i, t - 1), 1.0)], EQ, 0.0)
                    add_row(f"sbal_{tag}", [(V("s", i, t), 1.0), (V("s", i, t - 1), -1.0),
                                            (V("i", i, t), -1.0), (V("k", i, t - 1), 1.0)], EQ, 0.0)
            else:
                if t == 0:
                    add_row(f"mbal_{tag}", [(V("m", i, t), 1.0), (V("i", i, t), -1.0)], EQ, b.m - b.k_prev)
                    add_row(f"sbal_{tag}", [(V("s", i, t), 1.0), (V("i", i, t), -1.0)], EQ, b.s - b.r_prev)
                else:
                    add_row(f"mbal_{tag}", [(V("m", i, t), 1.0), (V("m", i, t - 1), -1.0),
                                            (V("i", i, t), -1.0), (V("k", i, t - 1), 1.0)], EQ, 0.0)
                    add_row(f"sbal_{tag}", [(V("s", i, t), 1.0), (V("s", i, t - 1), -1.0),
                                            (V("i", i, t), -1.0), (V("r", i, t - 1), 1.0)], EQ, 0.0)
            if opts.couple_vu:
                add_row(f"vu_{tag}", [(V("v", i, t), 1.0), (V("u", i, t), -1.0)], LE, 0.0)

    for t in range(H):
        add_row(f"pcap_{t}", [(V("P", i, t), 1.0) for i in range(N)], LE, plant.power_cap)
    if plant.feed_cap is not None:
        for t in range(H):
            add_row(f"icap_{t}", [(V("i", i, t), 1.0) for i in range(N)], LE, plant.feed_cap)
    if opts.cap_covers:
        for q, S in enumerate(minimal_covers(plant, opts.couple_vu)):
            for t in range(H):
                add_row(f"cover{q}_{t}", [(V("v", i, t), 1.0) for i in S], LE, len(S) - 1.0)

    A = sp.csr_matrix((vals, (rows_i, cols)), shape=(len(sense), nv))
    return WindowModel(
        names=names, is_binary=is_bin, lb=lb, ub=ub, c=c, A=A,
        sense=np.array(sense), rhs=np.array(rhs, dtype=float), row_names=row_names,
        n_units=N, horizon=H, variant=plant.variant,
        meta={
            "cost_basis": opts.cost_basis, "couple_vu": opts.couple_vu, "cap_covers": opts.cap_covers,
            "base_energy": [p.base_energy for p in plant.units],
            "melt_energy": [p.melt_energy for p in plant.units],
            "batch_size": [p.batch_size for p in plant.units],
            "power_cap": plant.power_cap, "feed_cap": plant.feed_cap,
            "prices": lam.copy(),
        },
    )


def relax(model: WindowModel) -> WindowModel:
    """Same model with every binary treated as continuous in [lb, ub]."""
    out = model.with_bounds()
    out.is_binary = np.zeros_like(model.is_binary)
    return out


def fix_binaries(model: WindowModel, values) -> WindowModel:
    """Copy of ``model`` with every binary fixed to the given 0/1 values."""
    idx = model.binary_index
    lb = model.lb.copy()
    ub = model.ub.copy()
    vals = np.asarray(values, dtype=float)
    lb[idx] = vals
    ub[idx] = vals
    return model.with_bounds(lb, ub)
