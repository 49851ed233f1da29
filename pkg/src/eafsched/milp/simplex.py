"""Dense bounded-variable primal simplex.

Two phases over a full tableau, nonbasic variables sit at either bound, and
the entering/leaving choice follows Bland's smallest-index rule so the method
cannot cycle. Meant for small models (oracle LPs, unit tests); the branch and
bound can also use it in place of HiGHS for tiny windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import EQ, LE, WindowModel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


class UnboundedLPError(RuntimeError):
    """Raised when a window LP is unbounded, which a well-formed window never is."""


@dataclass
class LPSolution:
    status: str
    objective: float = float("nan")
    x: np.ndarray | None = None
    dual_feasible: bool = False
    iterations: int = 0
    infeasible_rows: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _bounded_simplex(T, xB, basis, at_upper, lo, hi, cost, tol, max_iter):
    """Maximise ``cost @ x`` over the tableau in place.

    ``T`` is B^-1 [A | I_art], ``xB`` the basic values. Nonbasic columns sit
    at ``lo`` unless flagged in ``at_upper``.
    """
    m, ncol = T.shape
    is_basic = np.zeros(ncol, dtype=bool)
    is_basic[basis] = True
    it = 0
    while it < max_iter:
        d = cost - cost[basis] @ T
        d[is_basic] = 0.0
        fixed = hi - lo <= tol
        can_up = (~at_upper) & (d > tol) & ~fixed
        can_down = at_upper & (d < -tol) & ~fixed
        cand = np.flatnonzero(can_up | can_down)
        if cand.size == 0:
            return OPTIMAL, it
        j = int(cand[0])
        direction = 1.0 if can_up[j] else -1.0
        col = T[:, j] * direction

        theta = hi[j] - lo[j]
        leave = -1
        leave_to_upper = False
        with np.errstate(divide="ignore", invalid="ignore"):
            dec = col > tol
            inc = col < -tol
            lb_b = lo[basis]
            ub_b = hi[basis]
            ratio = np.full(m, np.inf)
            ratio[dec] = (xB[dec] - lb_b[dec]) / col[dec]
            ratio[inc] = (ub_b[inc] - xB[inc]) / (-col[inc])
        ratio = np.maximum(ratio, 0.0)
        if m:
            rmin = ratio.min()
            if rmin < theta - tol or (np.isinf(theta) and np.isfinite(rmin)):
                ties = np.flatnonzero(ratio <= rmin + tol)
                leave = int(ties[np.argmin(basis[ties])])
                theta = ratio[leave]
                leave_to_upper = bool(col[leave] < 0)
        if np.isinf(theta):
            return UNBOUNDED, it

        xB -= theta * col
        if leave < 0:
            # bound flip of the entering variable
            at_upper[j] = not at_upper[j]
            it += 1
            continue
        entering_value = (hi[j] - theta) if at_upper[j] else (lo[j] + theta)
        out = basis[leave]
        piv = T[leave, j]
        T[leave] /= piv
        others = np.arange(m) != leave
        T[others] -= np.outer(T[others, j], T[leave])
        xB[leave] = entering_value
        basis[leave] = j
        is_basic[out] = False
        is_basic[j] = True
        at_upper[out] = leave_to_upper
        at_upper[j] = False
        it += 1
    return ITERATION_LIMIT, it


def solve_lp(model: WindowModel, lb=None, ub=None, tol: float = 1e-9, max_iter: int = 50000) -> LPSolution:
    """Solve the LP relaxation of ``model`` (binaries relaxed to their bounds).

    Optional ``lb``/``ub`` override the model bounds, which is how branch and
    bound and the oracle fix binaries. Columns with equal bounds are
    substituted out before the simplex runs.
    """
    lo_x = np.asarray(model.lb if lb is None else lb, dtype=float)
    hi_x = np.asarray(model.ub if ub is None else ub, dtype=float)
    if np.any(lo_x > hi_x + tol):
        bad = np.flatnonzero(lo_x > hi_x + tol)
        return LPSolution(INFEASIBLE, infeasible_rows=[-1 - int(j) for j in bad])
    if not (np.all(np.isfinite(lo_x))):
        raise ValueError("embedded simplex needs finite lower bounds")

    fixed = hi_x - lo_x <= tol
    free = np.flatnonzero(~fixed)
    A_all = model.A.toarray()
    rhs = model.rhs - A_all[:, fixed] @ lo_x[fixed]
    A = A_all[:, free]
    # rows left without free columns are checked here and dropped
    empty = ~np.any(A != 0, axis=1)
    scale = 1e-7 * max(1.0, np.abs(model.rhs).max(initial=0.0))
    sense_all = model.sense
    bad = empty & (((sense_all == LE) & (rhs < -scale)) | ((sense_all == EQ) & (np.abs(rhs) > scale))
                   | ((sense_all != LE) & (sense_all != EQ) & (rhs > scale)))
    if bad.any():
        return LPSolution(INFEASIBLE, infeasible_rows=[int(r) for r in np.flatnonzero(bad)])
    keep = np.flatnonzero(~empty)
    xs = lo_x.copy()
    if len(free) == 0 or len(keep) == 0:
        xs[free] = np.where(model.c[free] > 0, hi_x[free], lo_x[free])
        if np.any(~np.isfinite(xs)):
            raise UnboundedLPError("window LP reported unbounded; all window variables are bounded")
        return LPSolution(OPTIMAL, model.objective(xs), xs, True, 0)
    status, x_free, dual_ok, iters, rows = _solve_dense(
        A[keep], sense_all[keep], rhs[keep], model.c[free], lo_x[free], hi_x[free], tol, max_iter, scale)
    if status != OPTIMAL:
        return LPSolution(status, iterations=iters, infeasible_rows=[int(keep[r]) for r in rows])
    xs[free] = x_free
    return LPSolution(OPTIMAL, model.objective(xs), xs, dual_ok, iters)


def _solve_dense(A, sense, rhs, c, lo_x, hi_x, tol, max_iter, infeas_tol):
    """Two-phase bounded simplex on dense data; returns (status, x, dual_ok, iterations, bad rows)."""
    m, n = A.shape
    # slacks: L rows get +s, G rows get -s
    slack_rows = np.flatnonzero(sense != EQ)
    ns = len(slack_rows)
    S = np.zeros((m, ns))
    for q, r in enumerate(slack_rows):
        S[r, q] = 1.0 if sense[r] == LE else -1.0
    Afull = np.hstack([A, S])
    lo = np.concatenate([lo_x, np.zeros(ns)])
    hi = np.concatenate([hi_x, np.full(ns, np.inf)])
    nstruct = n + ns

    # nonbasic start at lower bound (or upper if that is the only finite one)
    x0 = lo.copy()
    resid = rhs - Afull @ x0
    sign = np.where(resid >= 0, 1.0, -1.0)
    T = np.hstack([Afull * sign[:, None], np.eye(m)])
    xB = np.abs(resid)
    basis = np.arange(nstruct, nstruct + m)
    lo_all = np.concatenate([lo, np.zeros(m)])
    hi_all = np.concatenate([hi, np.full(m, np.inf)])
    at_upper = np.zeros(nstruct + m, dtype=bool)

    # phase I: maximise -sum(artificials)
    cost1 = np.concatenate([np.zeros(nstruct), -np.ones(m)])
    status, it1 = _bounded_simplex(T, xB, basis, at_upper, lo_all, hi_all, cost1, tol, max_iter)
    if status != OPTIMAL:
        return status, None, False, it1, []
    art_vals = np.zeros(m)
    in_basis_art = basis >= nstruct
    art_vals[basis[in_basis_art] - nstruct] = xB[in_basis_art]
    if art_vals.sum() > infeas_tol:
        return INFEASIBLE, None, False, it1, list(np.flatnonzero(art_vals > 1e-7))

    # phase II: artificials pinned at zero
    hi_all[nstruct:] = 0.0
    at_upper[nstruct:] = False
    cost2 = np.concatenate([c, np.zeros(ns + m)])
    status, it2 = _bounded_simplex(T, xB, basis, at_upper, lo_all, hi_all, cost2, tol, max_iter)
    if status == UNBOUNDED:
        raise UnboundedLPError("window LP reported unbounded; all window variables are bounded")
    if status != OPTIMAL:
        return status, None, False, it1 + it2, []

    x = np.where(at_upper, hi_all, lo_all)
    x[basis] = xB
    xs = np.clip(x[:n], lo_x, hi_x)
    d = cost2 - cost2[basis] @ T
    d[basis] = 0.0
    nonbasic = np.ones(len(d), dtype=bool)
    nonbasic[basis] = False
    nonbasic &= hi_all - lo_all > tol
    dual_ok = not (np.any(nonbasic & ~at_upper & (d > 1e-7)) or np.any(nonbasic & at_upper & (d < -1e-7)))
    return OPTIMAL, xs, dual_ok, it1 + it2, []
