"""Minimal sparse linear-program container and solver front end.

The model builders in :mod:`nurseflow.ldr` register whole variable blocks
(index arithmetic, no per-variable strings) and append rows; solving is
delegated to HiGHS through scipy with a pinned deterministic method, so the
same model always returns bit-identical solutions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

__all__ = ["LinearProgram", "SolverReport", "solve", "export_lp_text"]

# Dual simplex gives deterministic pivoting and clean vertex solutions but
# scales poorly past a few thousand variables, where interior point (with
# crossover, equally deterministic for fixed input) is an order of magnitude
# faster.  "auto" switches on problem size.
SOLVER_METHOD = "auto"
_SIMPLEX_VAR_LIMIT = 4000
RESIDUAL_TOLERANCE = 1e-7  # scaled primal feasibility an "optimal" report guarantees

_STATUS = {
    0: "optimal",
    1: "iteration-limit",
    2: "infeasible",
    3: "unbounded",
    4: "numerical-trouble",
}


@dataclass
class _Block:
    name: str
    offset: int
    count: int
    labeler: Callable[[int], str] | None


@dataclass
class LinearProgram:
    """min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub."""

    _blocks: list[_Block] = field(default_factory=list)
    _lb: list[np.ndarray] = field(default_factory=list)
    _ub: list[np.ndarray] = field(default_factory=list)
    _obj_cols: list[np.ndarray] = field(default_factory=list)
    _obj_vals: list[np.ndarray] = field(default_factory=list)
    _ub_rows: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    _ub_rhs: list[float] = field(default_factory=list)
    _eq_rows: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    _eq_rhs: list[float] = field(default_factory=list)

    @property
    def num_variables(self) -> int:
        if not self._blocks:
            return 0
        last = self._blocks[-1]
        return last.offset + last.count

    @property
    def num_constraints(self) -> int:
        return len(self._ub_rhs) + len(self._eq_rhs)

    def add_block(
        self,
        name: str,
        count: int,
        lb: float = 0.0,
        ub: float = np.inf,
        labeler: Callable[[int], str] | None = None,
    ) -> int:
        """Register ``count`` variables with shared bounds; returns the offset."""
        offset = self.num_variables
        self._blocks.append(_Block(name, offset, count, labeler))
        self._lb.append(np.full(count, lb, dtype=float))
        self._ub.append(np.full(count, ub, dtype=float))
        return offset

    def _flat_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self._lb) != 1:
            self._lb = [np.concatenate(self._lb) if self._lb else np.zeros(0)]
            self._ub = [np.concatenate(self._ub) if self._ub else np.zeros(0)]
        return self._lb[0], self._ub[0]

    def set_bounds(self, cols, lb, ub) -> None:
        """Override bounds of individual variables (used to pin committed plans)."""
        lbs, ubs = self._flat_bounds()
        lbs[cols] = lb
        ubs[cols] = ub

    def add_objective(self, cols, vals) -> None:
        self._obj_cols.append(np.asarray(cols, dtype=np.int64))
        self._obj_vals.append(np.asarray(vals, dtype=float))

    def add_le(self, cols, vals, rhs: float) -> None:
        self._ub_rows.append((np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=float)))
        self._ub_rhs.append(float(rhs))

    def add_eq(self, cols, vals, rhs: float) -> None:
        self._eq_rows.append((np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=float)))
        self._eq_rhs.append(float(rhs))

    def var_name(self, idx: int) -> str:
        for block in self._blocks:
            if block.offset <= idx < block.offset + block.count:
                local = idx - block.offset
                if block.labeler is not None:
                    return block.labeler(local)
                return f"{block.name}_{local}"
        raise IndexError(idx)

    # -- assembly ----------------------------------------------------------

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_variables)
        for cols, vals in zip(self._obj_cols, self._obj_vals):
            np.add.at(c, cols, vals)
        return c

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb, ub = self._flat_bounds()
        return lb.copy(), ub.copy()

    @staticmethod
    def _stack(rows, n) -> sparse.csr_matrix | None:
        if not rows:
            return None
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        for r, (cols, _) in enumerate(rows):
            indptr[r + 1] = indptr[r] + len(cols)
        indices = np.concatenate([cols for cols, _ in rows]) if rows else np.zeros(0, np.int64)
        data = np.concatenate([vals for _, vals in rows]) if rows else np.zeros(0)
        return sparse.csr_matrix((data, indices, indptr), shape=(len(rows), n))

    def matrices(self):
        n = self.num_variables
        for rows in (self._ub_rows, self._eq_rows):
            for cols, _ in rows:
                if len(cols) and (cols.min() < 0 or cols.max() >= n):
                    raise ValueError("constraint references an unregistered variable")
        A_ub = self._stack(self._ub_rows, n)
        A_eq = self._stack(self._eq_rows, n)
        return (
            self.objective_vector(),
            A_ub,
            np.asarray(self._ub_rhs, dtype=float),
            A_eq,
            np.asarray(self._eq_rhs, dtype=float),
            self.bounds(),
        )


@dataclass(frozen=True)
class SolverReport:
    status: str
    iterations: int
    solve_time: float
    objective: float
    feasibility_residual: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _residual(x, A_ub, b_ub, A_eq, b_eq, lb, ub) -> float:
    """Scaled primal feasibility violation of a candidate solution."""
    res = 0.0
    if A_ub is not None and A_ub.shape[0]:
        scale = 1.0 + float(np.abs(b_ub).max(initial=0.0))
        res = max(res, float(np.maximum(A_ub @ x - b_ub, 0.0).max(initial=0.0)) / scale)
    if A_eq is not None and A_eq.shape[0]:
        scale = 1.0 + float(np.abs(b_eq).max(initial=0.0))
        res = max(res, float(np.abs(A_eq @ x - b_eq).max(initial=0.0)) / scale)
    finite_lb = np.isfinite(lb)
    finite_ub = np.isfinite(ub)
    if finite_lb.any():
        res = max(res, float(np.maximum(lb[finite_lb] - x[finite_lb], 0.0).max(initial=0.0)))
    if finite_ub.any():
        res = max(res, float(np.maximum(x[finite_ub] - ub[finite_ub], 0.0).max(initial=0.0)))
    return res


def solve(lp: LinearProgram, method: str = SOLVER_METHOD) -> tuple[np.ndarray | None, SolverReport]:
    """Solve the LP; never raises on infeasible/unbounded, reports the status."""
    c, A_ub, b_ub, A_eq, b_eq, (lb, ub) = lp.matrices()
    t0 = time.perf_counter()
    if lp.num_variables == 0:
        return np.zeros(0), SolverReport("optimal", 0, 0.0, 0.0, 0.0)
    if method == "auto":
        method = "highs-ds" if lp.num_variables <= _SIMPLEX_VAR_LIMIT else "highs-ipm"
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub if A_ub is not None else None,
        A_eq=A_eq,
        b_eq=b_eq if A_eq is not None else None,
        bounds=np.column_stack([lb, ub]),
        method=method,
    )
    elapsed = time.perf_counter() - t0
    status = _STATUS.get(res.status, "numerical-trouble")
    if res.status == 0:
        x = np.asarray(res.x)
        resid = _residual(x, A_ub, b_ub, A_eq, b_eq, lb, ub)
        # "optimal" promises a feasible point to tolerance; anything looser
        # is reported as numerical trouble rather than silently accepted
        if resid > RESIDUAL_TOLERANCE:
            return x, SolverReport("numerical-trouble", int(res.nit), elapsed, float(res.fun), resid)
        return x, SolverReport("optimal", int(res.nit), elapsed, float(res.fun), resid)
    return None, SolverReport(status, int(getattr(res, "nit", 0) or 0), elapsed, float("nan"))


def _fmt(v: float) -> str:
    return repr(float(v))


def export_lp_text(lp: LinearProgram, path) -> None:
    """Write the model in CPLEX LP text format for external cross-checking."""
    c, A_ub, b_ub, A_eq, b_eq, (lb, ub) = lp.matrices()
    lines = ["\\ nurseflow model export", "Minimize", " obj:"]
    terms = [
        f" {'+' if v >= 0 else '-'} {_fmt(abs(v))} {lp.var_name(i)}"
        for i, v in enumerate(c)
        if v != 0.0
    ]
    lines.extend(terms or [" 0 " + (lp.var_name(0) if lp.num_variables else "x0")])
    lines.append("Subject To")

    def emit(A, rhs, sense, tag):
        if A is None:
            return
        A = A.tocsr()
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            body = " ".join(
                f"{'+' if v >= 0 else '-'} {_fmt(abs(v))} {lp.var_name(int(i))}"
                for i, v in zip(A.indices[lo:hi], A.data[lo:hi])
            )
            lines.append(f" {tag}{r}: {body or '0 ' + lp.var_name(0)} {sense} {_fmt(rhs[r])}")

    emit(A_ub, b_ub, "<=", "c")
    emit(A_eq, b_eq, "=", "e")
    lines.append("Bounds")
    for i in range(lp.num_variables):
        name = lp.var_name(i)
        l, u = lb[i], ub[i]
        if l == -np.inf and u == np.inf:
            lines.append(f" {name} free")
        elif u == np.inf:
            lines.append(f" {_fmt(l)} <= {name}")
        else:
            lines.append(f" {_fmt(l)} <= {name} <= {_fmt(u)}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
