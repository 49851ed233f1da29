"""Primal heuristics for window MILPs.

Every function works through a node LP callable ``lp(lb, ub) -> (x, obj)``
(``x`` is ``None`` when the LP is infeasible). Binary values are returned
in ``model.binary_index`` order.

The relaxation tends to run fractions of a batch through a furnace, so
plain rounding of an LP point is useless. The LP-guided heuristic fixes
startups first (a dive that keeps the better of the two LP branches),
improves their timing by local moves, then completes melt and on-state
binaries twice, greedily under the power cap and by a second dive, and
keeps the better completion.
"""

from __future__ import annotations

import numpy as np

from .model import WindowModel, var_index

INT_TOL = 1e-6


def round_and_repair(model: WindowModel, x: np.ndarray) -> np.ndarray:
    """Round the binaries of ``x`` to a point that respects the stage logic.

    Melting without the furnace on is dropped, startups from a non-idle
    previous step are zeroed, and at steps over the power or feed cap the
    highest-index units give up melting first and then base load.
    """
    meta = model.meta
    N, H = model.n_units, model.horizon
    xb = np.where(x >= 0.5, 1.0, 0.0)

    def get(kind, i, t):
        return xb[var_index(kind, i, t, N)]

    def put(kind, i, t, val):
        xb[var_index(kind, i, t, N)] = val

    base = meta.get("base_energy")
    melt = meta.get("melt_energy")
    batch = meta.get("batch_size")
    for t in range(H):
        for i in range(N):
            j_y = var_index("y", i, t, N)
            if xb[j_y] and not (model.lb[j_y] <= 1.0 <= model.ub[j_y]):
                put("y", i, t, 0.0)
            if t > 0 and get("y", i, t) and (get("u", i, t - 1) or get("v", i, t - 1)):
                put("y", i, t, 0.0)
            if get("v", i, t) and not get("u", i, t):
                put("v", i, t, 0.0)
        if base is not None:
            load = sum(base[i] * get("u", i, t) + melt[i] * get("v", i, t) for i in range(N))
            for kind in ("v", "u"):
                for i in reversed(range(N)):
                    if load <= meta["power_cap"] + 1e-12:
                        break
                    if get(kind, i, t):
                        if kind == "u":
                            load -= base[i]
                            put("u", i, t, 0.0)
                        else:
                            load -= melt[i]
                            put("v", i, t, 0.0)
            feed_cap = meta.get("feed_cap")
            if feed_cap is not None:
                fed = sum(batch[i] * get("y", i, t) for i in range(N))
                for i in reversed(range(N)):
                    if fed <= feed_cap + 1e-12:
                        break
                    if get("y", i, t):
                        fed -= batch[i]
                        put("y", i, t, 0.0)
    # respect binaries fixed by branching
    idx = model.binary_index
    return np.clip(xb[idx], model.lb[idx], model.ub[idx])


def drop_idle_on(model: WindowModel, x: np.ndarray) -> np.ndarray:
    """Binaries of ``x`` with furnaces switched off where they did nothing."""
    N, H = model.n_units, model.horizon
    xb = x.copy()
    for t in range(H):
        for i in range(N):
            ju, jv = var_index("u", i, t, N), var_index("v", i, t, N)
            jr, jk = var_index("r", i, t, N), var_index("k", i, t, N)
            if model.c[var_index("P", i, t, N)] > 0:
                continue  # negative price: running idle pays
            if xb[jv] > 0.5 and x[jk] <= INT_TOL and model.lb[jv] < 0.5:
                xb[jv] = 0.0
            if xb[ju] > 0.5 and xb[jv] < 0.5 and x[jr] <= INT_TOL and x[jk] <= INT_TOL and model.lb[ju] < 0.5:
                xb[ju] = 0.0
    return np.round(xb[model.binary_index])


def _grid(model: WindowModel, kind: str) -> np.ndarray:
    N, H = model.n_units, model.horizon
    return np.array([[var_index(kind, i, t, N) for t in range(H)] for i in range(N)])


def _dive(lp, model: WindowModel, idx: np.ndarray, lo, hi, x):
    """Fix the binaries ``idx`` one at a time, largest fractional value first.

    Each chosen binary is tried at 1 and at 0 and the better LP is kept.
    Returns ``(lo, hi, x, obj, lps)`` with every entry of ``idx`` fixed;
    ``x`` is ``None`` if the LP became infeasible.
    """
    lo, hi = lo.copy(), hi.copy()
    lps = 0
    obj = -np.inf
    while x is not None:
        f = x[idx]
        free = (lo[idx] < hi[idx]) & (f > INT_TOL) & (f < 1 - INT_TOL)
        if not free.any():
            break
        j = idx[int(np.argmax(np.where(free, f, -1.0)))]
        lo[j] = hi[j] = 1.0
        x1, o1 = lp(lo, hi)
        lo[j] = hi[j] = 0.0
        x0, o0 = lp(lo, hi)
        lps += 2
        if o1 > o0:
            lo[j] = hi[j] = 1.0
            x, obj = x1, o1
        else:
            x, obj = x0, o0
    if x is not None:
        lo[idx] = hi[idx] = np.clip(np.round(x[idx]), lo[idx], hi[idx])
        x, obj = lp(lo, hi)
        lps += 1
    return lo, hi, x, obj, lps


def startup_dive(lp, model: WindowModel, lb, ub, x):
    """Dive on the startups in step order. Returns ``(lo, hi, x, obj, lps)``."""
    return _dive(lp, model, _grid(model, "y").T.ravel(), lb, ub, x)


def shift_startups(lp, model: WindowModel, lb, ub, lo, hi, obj, shifts=(-2, -1, 1, 2), max_lps=400):
    """Local search over startup times with all ``y`` fixed in ``lo``/``hi``.

    For each startup not forced by ``lb``, moving it by each of ``shifts``
    and dropping it are evaluated; the best improving move is taken and the
    scan restarts. Returns ``(lo, hi, x, obj, lps)``.
    """
    H = model.horizon
    yid = _grid(model, "y")
    lps = 0
    x = None
    improved = True
    while improved and lps < max_lps:
        improved = False
        ones = [(i, t) for i in range(model.n_units) for t in range(H)
                if lo[yid[i, t]] > 0.5 and lb[yid[i, t]] < 0.5]
        for i, t in ones:
            best = None
            for d in (*shifts, None):
                l2, h2 = lo.copy(), hi.copy()
                l2[yid[i, t]] = h2[yid[i, t]] = 0.0
                if d is not None:
                    t2 = t + d
                    if not 0 <= t2 < H or ub[yid[i, t2]] < 0.5 or l2[yid[i, t2]] > 0.5:
                        continue
                    l2[yid[i, t2]] = h2[yid[i, t2]] = 1.0
                x2, o2 = lp(l2, h2)
                lps += 1
                if x2 is not None and o2 > obj + 1e-7 and (best is None or o2 > best[0]):
                    best = (o2, l2, h2, x2)
            if best is not None:
                obj, lo, hi, x = best
                improved = True
                break
            if lps >= max_lps:
                break
    if x is None:
        x, obj = lp(lo, hi)
        lps += 1
    return lo, hi, x, obj, lps


def assign_melts(lp, model: WindowModel, lo, hi, x):
    """Complete a startup-fixed point into binary values.

    Each unit gets as many melt steps as its LP melt amount needs at full
    rate, taken in order of LP melt intensity where the power cap still has
    room for a full load. Furnaces are then switched on wherever the
    resulting LP uses them. Returns ``(values or None, lps)``.
    """
    meta = model.meta
    N, H = model.n_units, model.horizon
    lo, hi = lo.copy(), hi.copy()
    vid, uid, kid = _grid(model, "v"), _grid(model, "u"), _grid(model, "k")
    full = np.array(meta["base_energy"]) + np.array(meta["melt_energy"])
    K = model.ub[kid[:, 0]]
    need = np.ceil(x[kid].sum(axis=1) / K - 1e-6).astype(int)
    sel = lo[vid] > 0.5
    have = sel.sum(axis=1)
    load = (full[:, None] * sel).sum(axis=0)
    free = lo[vid] < hi[vid]
    order = sorted((-x[vid[i, t]], t, i) for i in range(N) for t in range(H)
                   if free[i, t] and x[vid[i, t]] > 1e-9)
    for _, t, i in order:
        if have[i] >= need[i] or load[t] + full[i] > meta["power_cap"] + 1e-12:
            continue
        sel[i, t] = True
        have[i] += 1
        load[t] += full[i]
    lo[vid[free]] = hi[vid[free]] = sel[free].astype(float)
    xv, _ = lp(lo, hi)
    if xv is None:
        return None, 1
    ufree = lo[uid] < hi[uid]
    on = (xv[uid] > INT_TOL).astype(float)
    lo[uid[ufree]] = hi[uid[ufree]] = on[ufree]
    point = xv.copy()
    point[uid] = lo[uid]
    vals = round_and_repair(model.with_bounds(lo, hi), point)
    return vals, 1


def melt_dive(lp, model: WindowModel, lo, hi, x):
    """Complete a startup-fixed point by diving on melt, then on-state binaries."""
    lo, hi, x, _, lps = _dive(lp, model, _grid(model, "v").T.ravel(), lo, hi, x)
    if x is None:
        return None, lps
    lo, hi, x, _, used = _dive(lp, model, _grid(model, "u").T.ravel(), lo, hi, x)
    lps += used
    if x is None:
        return None, lps
    return round_and_repair(model.with_bounds(lo, hi), x), lps


def lp_guided_incumbent(lp, model: WindowModel, lb, ub, x, max_lps: int = 600):
    """Startup dive, startup local search, then the better of two melt completions.

    Returns ``(values or None, lps)``.
    """
    lo, hi, xy, obj, lps = startup_dive(lp, model, lb, ub, x)
    if xy is None:
        return None, lps
    lo, hi, xy, obj, used = shift_startups(lp, model, lb, ub, lo, hi, obj, max_lps=max(0, max_lps - lps))
    lps += used
    if xy is None:
        return None, lps
    best, best_obj = None, -np.inf
    for complete in (assign_melts, melt_dive):
        vals, used = complete(lp, model, lo, hi, xy)
        lps += used
        if vals is None:
            continue
        l2, h2 = lb.copy(), ub.copy()
        l2[model.binary_index] = h2[model.binary_index] = vals
        _, o = lp(l2, h2)
        lps += 1
        if o > best_obj:
            best, best_obj = vals, o
    return best, lps
