"""Ground truth for small instances.

``brute_force_optimal`` enumerates every binary schedule, keeps the ones
that obey the startup, stage and cap rules, and solves the remaining
continuous LP with the embedded simplex. Schedules are visited in order of
a cheap profit bound so most LPs are never solved.

``template_dp`` is an exact dynamic program over the cycle-template policy
class used by the Q-learning dispatcher.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .milp.model import BuildOptions, build_window, var_index
from .milp.simplex import OPTIMAL, solve_lp
from .plant import PlantConfig, Variant
from .qlearning import CycleTemplate, DEFAULT_TEMPLATE, TemplateEnv

MAX_BINARIES = 24


class OracleBudgetError(ValueError):
    pass


@dataclass
class OracleResult:
    objective: float
    binaries: np.ndarray | None  # (T, N, 3) columns u, v, y
    enumerated: int
    lps_solved: int
    x: np.ndarray | None = None


def _unit_sequences(T: int, couple_vu: bool) -> np.ndarray:
    """All (u, v, y) sequences of one idle-started unit obeying the stage and startup rules."""
    combos = [(u, v, y) for u in (0, 1) for v in (0, 1) for y in (0, 1) if not (couple_vu and v and not u)]
    seqs = [()]
    for _ in range(T):
        nxt = []
        for s in seqs:
            idle_before = not s or (s[-1][0] == 0 and s[-1][1] == 0)
            for c in combos:
                if c[2] and not idle_before:
                    continue
                nxt.append(s + (c,))
        seqs = nxt
    return np.array(seqs, dtype=np.int8).reshape(len(seqs), T, 3)


def brute_force_optimal(plant: PlantConfig, prices, T: int | None = None, variant: Variant | None = None,
                        options: BuildOptions | None = None) -> OracleResult:
    """Exact optimum of the window problem from an all-idle start."""
    lam = np.asarray(getattr(prices, "values", prices), dtype=float)
    T = len(lam) if T is None else T
    lam = lam[:T]
    N = plant.n_units
    if 3 * N * T > MAX_BINARIES:
        raise OracleBudgetError(f"{3 * N * T} binaries exceed the enumeration budget of {MAX_BINARIES}")
    if variant is not None:
        plant = PlantConfig(plant.units, plant.power_cap, plant.feed_cap, Variant(variant))
    opts = options or BuildOptions(cap_covers=False)
    if T == 0:
        return OracleResult(0.0, np.zeros((0, N, 3), dtype=np.int8), 1, 0)

    per_unit = _unit_sequences(T, opts.couple_vu)
    combos = np.array(list(itertools.product(range(len(per_unit)), repeat=N)))
    sched = per_unit[combos]  # (n, N, T, 3)
    sched = sched.transpose(0, 2, 1, 3)  # (n, T, N, 3)
    u, v, y = sched[..., 0], sched[..., 1], sched[..., 2]
    base = np.array([p.base_energy for p in plant.units])
    melt = np.array([p.melt_energy for p in plant.units])
    power = u * base + v * melt  # (n, T, N)
    ok = (power.sum(axis=2) <= plant.power_cap + 1e-9).all(axis=1)
    if plant.feed_cap is not None:
        batch = np.array([p.batch_size for p in plant.units])
        ok &= ((y * batch).sum(axis=2) <= plant.feed_cap + 1e-9).all(axis=1)
    sched, u, v, y, power = sched[ok], u[ok], v[ok], y[ok], power[ok]
    enumerated = len(combos)

    # profit bound: every tapped ton was charged, tapped under the rate cap and
    # (physically) melted under the melt cap; energy is fixed by the binaries
    bound = -(power.sum(axis=2) * lam).sum(axis=1)
    for i, p in enumerate(plant.units):
        ny, nu, nv = y[:, :, i].sum(1), u[:, :, i].sum(1), v[:, :, i].sum(1)
        tons = np.minimum(p.batch_size * ny, p.max_tap_rate * nu)
        if plant.variant is Variant.PHYSICAL:
            tons = np.minimum(tons, p.max_melt_rate * nv)
        margin = p.sell_price * p.yield_ratio - (p.proc_cost if opts.cost_basis == "output" else 0.0)
        bound += np.maximum(margin, 0.0) * tons
        bound -= ny * (p.startup_cost + (p.proc_cost * p.batch_size if opts.cost_basis == "input" else 0.0))

    model = build_window(plant, lam, None, T, opts)
    bidx = model.binary_index
    kind_pos = {"u": 0, "v": 1, "y": 2}
    col = np.empty(len(bidx), dtype=int)
    for n_, j in enumerate(bidx):
        t, rest = divmod(j, N * 9)
        i, kpos = divmod(rest, 9)
        kind = model.names[j].split("[")[0]
        assert var_index(kind, i, t, N) == j
        col[n_] = (t * N + i) * 3 + kind_pos[kind]
    flat = sched.reshape(len(sched), -1)
    # power and charge follow from the binaries; fixing them shrinks each LP
    p_cols = np.array([[var_index("P", i, t, N) for i in range(N)] for t in range(T)])
    i_cols = np.array([[var_index("i", i, t, N) for i in range(N)] for t in range(T)])
    batch = np.array([p.batch_size for p in plant.units])

    best, best_k, best_x, lps = -np.inf, None, None, 0
    for k in np.argsort(-bound, kind="stable"):
        if bound[k] <= best + 1e-9:
            break
        vals = flat[k, col].astype(float)
        lb, ub = model.lb.copy(), model.ub.copy()
        lb[bidx] = ub[bidx] = vals
        lb[p_cols] = ub[p_cols] = power[k]
        lb[i_cols] = ub[i_cols] = y[k] * batch
        sol = solve_lp(model, lb, ub)
        lps += 1
        if sol.status == OPTIMAL and sol.objective > best:
            best, best_k, best_x = sol.objective, k, sol.x
    if best_k is None:
        raise RuntimeError("no feasible schedule found (the all-idle schedule should always be feasible)")
    return OracleResult(float(best), sched[best_k].copy(), enumerated, lps, best_x)


@dataclass
class TemplateDPResult:
    profit: float
    starts: np.ndarray  # (T, N) start decisions of one optimal schedule


def template_dp(plant: PlantConfig, prices, T: int | None = None,
                template: CycleTemplate = DEFAULT_TEMPLATE, env: TemplateEnv | None = None) -> TemplateDPResult:
    """Best total settled profit over non-preemptive template schedules.

    Each step is settled like the plant model does (processing cost and
    startup cost at the charge, energy and revenue as they occur). No cycle
    may start within L steps of the end of the series.
    """
    lam = np.asarray(getattr(prices, "values", prices), dtype=float)
    T = len(lam) if T is None else T
    lam = lam[:T]
    if plant.n_units > 3:
        raise OracleBudgetError("template DP supports at most 3 units")
    env = env or TemplateEnv(plant, template)
    rev, energy = env.settlement_terms()
    mask = env.mask
    value = np.zeros(len(env.taus))
    choice = np.zeros((T, len(env.taus)), dtype=np.int16)
    no_start = env.bits.sum(axis=1) == 0
    for t in range(T - 1, -1, -1):
        q = rev - lam[t] * energy + value[env.next_tau]
        allowed = mask if t + env.L <= T else mask & no_start[None, :]
        q = np.where(allowed, q, -np.inf)
        choice[t] = np.argmax(q, axis=1)
        value = q[np.arange(len(q)), choice[t]]
    starts = np.zeros((T, env.N), dtype=int)
    tau = 0
    for t in range(T):
        a = int(choice[t, tau])
        starts[t] = env.bits[a]
        tau = int(env.next_tau[tau, a])
    return TemplateDPResult(float(value[0]), starts)
