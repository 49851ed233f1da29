"""Best-first branch and bound over window MILPs."""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass

import numpy as np

try:  # optional fast LP engine for node relaxations
    import highspy
except ImportError:  # pragma: no cover - exercised only without highspy
    highspy = None

from .heuristics import INT_TOL, drop_idle_on, lp_guided_incumbent, round_and_repair
from .model import GE, LE, WindowModel
from .simplex import solve_lp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"  # optimal within the requested relative gap
NODE_LIMIT = "node_limit"
INFEASIBLE = "infeasible"
INFEASIBLE_UNKNOWN = "infeasible_unknown"  # limit hit before any incumbent


@dataclass
class MIPSolution:
    status: str
    objective: float
    x: np.ndarray | None
    bound: float
    gap: float
    nodes: int
    lp_solves: int = 0
    seconds: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.x is not None


def relative_gap(bound: float, incumbent: float) -> float:
    """Gap of a maximisation, relative to ``max(1, |incumbent|)`` dollars."""
    if not np.isfinite(incumbent):
        return np.inf
    return max(bound - incumbent, 0.0) / max(1.0, abs(incumbent))


class HighsLP:
    """LP relaxations solved by HiGHS; the model is loaded once and each node
    only changes column bounds, so re-solves start from the last basis."""

    def __init__(self, model: WindowModel):
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        inf = highspy.kHighsInf
        lp = highspy.HighsLp()
        lp.num_col_ = model.n_vars
        lp.num_row_ = model.n_rows
        lp.col_cost_ = -model.c
        lp.col_lower_ = model.lb
        lp.col_upper_ = model.ub
        lp.row_lower_ = np.where(model.sense == LE, -inf, model.rhs)
        lp.row_upper_ = np.where(model.sense == GE, inf, model.rhs)
        A = model.A.tocsc()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        h.passModel(lp)
        self.h = h
        self.cols = np.arange(model.n_vars, dtype=np.int32)
        self.offset = model.obj_offset

    def __call__(self, lb, ub):
        h = self.h
        h.changeColsBounds(len(self.cols), self.cols, lb, ub)
        h.run()
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kOptimal:
            x = np.array(h.getSolution().col_value)
            return x, -h.getInfo().objective_function_value + self.offset
        if status == highspy.HighsModelStatus.kInfeasible:
            return None, -np.inf
        if status == highspy.HighsModelStatus.kUnbounded:
            raise RuntimeError("window LP reported unbounded; all window variables are bounded")
        # a stale basis occasionally confuses the warm start; retry cold once
        h.clearSolver()
        h.run()
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kOptimal:
            x = np.array(h.getSolution().col_value)
            return x, -h.getInfo().objective_function_value + self.offset
        if status == highspy.HighsModelStatus.kInfeasible:
            return None, -np.inf
        raise RuntimeError(f"HiGHS failed on a node LP: {h.modelStatusToString(status)}")


class SimplexLP:
    """LP relaxations solved by the embedded dense simplex."""

    def __init__(self, model: WindowModel):
        self.model = model

    def __call__(self, lb, ub):
        sol = solve_lp(self.model, lb, ub)
        if sol.ok:
            return sol.x, sol.objective
        if sol.status == "infeasible":
            return None, -np.inf
        raise RuntimeError(f"embedded simplex stopped with status {sol.status}")


def make_lp(model: WindowModel, engine: str = "auto"):
    """Node LP callable; ``auto`` uses HiGHS when installed, else the embedded simplex."""
    if engine == "auto":
        engine = "highs" if highspy is not None else "simplex"
    if engine == "highs":
        if highspy is None:
            raise ImportError("lp_engine='highs' needs the highspy package")
        return HighsLP(model)
    if engine == "simplex":
        return SimplexLP(model)
    raise ValueError(f"unknown LP engine {engine!r}")


def _tighten(model: WindowModel):
    lb, ub = model.lb.copy(), model.ub.copy()
    b = model.is_binary
    lb[b] = np.ceil(lb[b] - INT_TOL)
    ub[b] = np.floor(ub[b] + INT_TOL)
    return lb, ub


def _fixed_lp(lp, model, lb, ub, bin_vals):
    idx = model.binary_index
    lo, hi = lb.copy(), ub.copy()
    lo[idx] = bin_vals
    hi[idx] = bin_vals
    if np.any(lo > hi + 1e-12):
        return None, -np.inf
    return lp(lo, hi)


def solve_mip(
    model: WindowModel,
    rel_gap: float = 1e-4,
    node_limit: int = 100_000,
    lp_engine: str = "auto",
    time_limit: float | None = None,
    heuristic_every: int = 10,
    guided_heuristic: bool = True,
    initial: np.ndarray | None = None,
) -> MIPSolution:
    """Maximise ``model`` by best-first branch and bound.

    Nodes are expanded in order of their LP bound; the most fractional
    binary is branched on, ties going to the earliest step and then the
    lowest unit. The incumbent starts from the rounded and repaired root
    point, an optional ``initial`` binary assignment and (unless disabled)
    the LP-guided heuristic; plain rounding is retried every
    ``heuristic_every`` nodes. Nodes whose bound is within ``rel_gap`` of
    the incumbent are pruned, so the returned ``bound`` is a proof of the
    reported gap.
    """
    t0 = time.perf_counter()
    lp = make_lp(model, lp_engine)
    lb0, ub0 = _tighten(model)
    bins = model.binary_index
    lp_solves = 0

    inc_x: np.ndarray | None = None
    inc_obj = -np.inf

    def cutoff():
        if not np.isfinite(inc_obj):
            return -np.inf
        return inc_obj + rel_gap * max(1.0, abs(inc_obj)) + 1e-9

    def try_incumbent(lo, hi, bin_vals):
        nonlocal inc_x, inc_obj, lp_solves
        x, obj = _fixed_lp(lp, model, lo, hi, bin_vals)
        lp_solves += 1
        if x is None:
            return
        cleaned = drop_idle_on(model, x)
        if not np.array_equal(cleaned, bin_vals):
            x2, obj2 = _fixed_lp(lp, model, lo, hi, cleaned)
            lp_solves += 1
            if x2 is not None and obj2 > obj:
                x, obj = x2, obj2
        if obj > inc_obj + 1e-9:
            x = x.copy()
            x[bins] = np.round(x[bins])
            inc_x, inc_obj = x, obj

    def elapsed():
        return time.perf_counter() - t0

    if np.any(lb0 > ub0):
        return MIPSolution(INFEASIBLE, -np.inf, None, -np.inf, np.inf, 0, 0, elapsed())

    root_x, root_obj = lp(lb0, ub0)
    lp_solves += 1
    if root_x is None:
        return MIPSolution(INFEASIBLE, -np.inf, None, -np.inf, np.inf, 1, lp_solves, elapsed())
    if initial is not None:
        try_incumbent(lb0, ub0, np.clip(np.round(np.asarray(initial, float)), lb0[bins], ub0[bins]))
    try_incumbent(lb0, ub0, round_and_repair(model.with_bounds(lb0, ub0), root_x))
    frac_root = np.abs(root_x[bins] - np.round(root_x[bins])).max(initial=0.0)
    if guided_heuristic and frac_root > INT_TOL and root_obj > cutoff():
        vals, used = lp_guided_incumbent(lp, model, lb0, ub0, root_x)
        lp_solves += used
        if vals is not None:
            try_incumbent(lb0, ub0, vals)

    counter = 0
    heap = [(-root_obj, counter, lb0, ub0, root_x, root_obj)]
    nodes = 1
    pruned_bound = -np.inf  # largest bound among nodes dropped within tolerance
    status = OPTIMAL
    while heap:
        if -heap[0][0] <= cutoff():
            break
        if nodes >= node_limit or (time_limit is not None and elapsed() > time_limit):
            status = NODE_LIMIT
            break
        _, _, lb, ub, x, obj = heapq.heappop(heap)
        xf = x[bins]
        frac = np.abs(xf - np.round(xf))
        worst = frac.max(initial=0.0)
        if worst <= INT_TOL:
            try_incumbent(lb, ub, np.round(xf))
            continue
        if nodes % heuristic_every == 0:
            try_incumbent(lb, ub, round_and_repair(model.with_bounds(lb, ub), x))
        # earliest index among the most fractional (index order is step, unit, kind)
        j = int(bins[np.flatnonzero(frac >= worst - 1e-12)[0]])
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            cx, cobj = lp(clb, cub)
            lp_solves += 1
            nodes += 1
            if cx is None:
                continue
            cf = cx[bins]
            if np.abs(cf - np.round(cf)).max(initial=0.0) <= INT_TOL:
                try_incumbent(clb, cub, np.round(cf))
                continue
            if cobj <= cutoff():
                pruned_bound = max(pruned_bound, cobj)
                continue
            counter += 1
            heapq.heappush(heap, (-cobj, counter, clb, cub, cx, cobj))

    open_bound = -heap[0][0] if heap else -np.inf
    best_bound = max(open_bound, pruned_bound, inc_obj)
    gap = relative_gap(best_bound, inc_obj)
    if inc_x is None:
        status = INFEASIBLE if status == OPTIMAL else INFEASIBLE_UNKNOWN
    return MIPSolution(status, inc_obj, inc_x, best_bound, gap, nodes, lp_solves, elapsed())
