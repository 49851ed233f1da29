"""Fixed-format MPS export of a window model.

Rows and columns get 8-character names (``R0000012``, ``C0000345``) so the
file stays within the fixed field layout; the original names are listed in
comment lines. The model maximizes, so the objective coefficients are
negated and the file is a minimization.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import EQ, GE, LE, WindowModel

_ROW_TYPE = {LE: "L", EQ: "E", GE: "G"}


def _num(v: float) -> str:
    """Shortest-loss representation that fits the 12-character number field."""
    v = float(v)
    if v == int(v) and abs(v) < 1e11:
        return str(int(v))
    for p in range(12, 0, -1):
        s = f"{v:.{p}g}"
        if len(s) <= 12:
            return s
    raise ValueError(f"cannot format {v} in 12 characters")


def _line(code: str, name1: str, name2: str = "", value: float | None = None,
          name3: str = "", value2: float | None = None) -> str:
    out = f" {code:<2} {name1:<8}  {name2:<8}"
    if value is not None:
        out += f"  {_num(value):>12}"
    if name3:
        out += f"   {name3:<8}  {_num(value2):>12}"
    return out.rstrip()


def col_name(j: int) -> str:
    return f"C{j:07d}"


def row_name(r: int) -> str:
    return f"R{r:07d}"


def export_mps(model: WindowModel, path: str | Path, name: str = "EAFWIN") -> Path:
    if model.n_vars == 0 or model.n_rows == 0:
        raise ValueError("cannot export an empty model")
    path = Path(path)
    A = model.A.tocsc()
    lines = [
        "* objective sense MAX: coefficients are negated, minimize this file",
        f"* objective offset {model.obj_offset!r} is the RHS of row OBJ (constant term = -RHS)",
        f"* window N={model.n_units} H={model.horizon} variant={model.variant.value}",
    ]
    lines += [f"* {col_name(j)} {n}" for j, n in enumerate(model.names)]
    lines += [f"* {row_name(r)} {n}" for r, n in enumerate(model.row_names)]
    lines.append(f"NAME          {name[:8]}")
    lines.append("ROWS")
    lines.append(" N  OBJ")
    for r, s in enumerate(model.sense):
        lines.append(f" {_ROW_TYPE[s]}  {row_name(r)}")
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(model.n_vars):
        if model.is_binary[j] and not in_int:
            lines.append(f"    MARKER{marker:04d}  'MARKER'                 'INTORG'")
            in_int, marker = True, marker + 1
        elif not model.is_binary[j] and in_int:
            lines.append(f"    MARKER{marker:04d}  'MARKER'                 'INTEND'")
            in_int, marker = False, marker + 1
        entries = []
        if model.c[j] != 0:
            entries.append(("OBJ", -model.c[j]))
        lo, hi = A.indptr[j], A.indptr[j + 1]
        entries += [(row_name(int(r)), float(v)) for r, v in zip(A.indices[lo:hi], A.data[lo:hi]) if v != 0]
        if not entries:
            entries.append(("OBJ", 0.0))
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            if len(pair) == 2:
                lines.append(_line("", col_name(j), pair[0][0], pair[0][1], pair[1][0], pair[1][1]))
            else:
                lines.append(_line("", col_name(j), pair[0][0], pair[0][1]))
    if in_int:
        lines.append(f"    MARKER{marker:04d}  'MARKER'                 'INTEND'")
    lines.append("RHS")
    if model.obj_offset:
        lines.append(_line("", "RHS", "OBJ", model.obj_offset))
    for r in np.flatnonzero(model.rhs):
        lines.append(_line("", "RHS", row_name(int(r)), float(model.rhs[r])))
    lines.append("BOUNDS")
    for j in range(model.n_vars):
        lb, ub = float(model.lb[j]), float(model.ub[j])
        c = col_name(j)
        if lb == ub:
            lines.append(_line("FX", "BND", c, lb))
            continue
        if lb != 0:
            lines.append(_line("LO" if np.isfinite(lb) else "MI", "BND", c, lb if np.isfinite(lb) else None))
        if np.isfinite(ub):
            lines.append(_line("UP", "BND", c, ub))
        elif model.is_binary[j]:
            lines.append(_line("PL", "BND", c))
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n")
    return path
