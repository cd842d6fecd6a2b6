"""LP solution layer.

Models are compiled once into sparse row form; branch-and-bound nodes then
re-solve with adjusted variable bounds and extra cut rows. The numerical
workhorse is HiGHS: by default through its scipy binding directly (one
options object per compiled model, per-solve model loads), falling back to
``scipy.optimize.linprog`` when the direct binding is unavailable or a
solve comes back with an ambiguous status.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ..mip.model import LinExpr, MipModel, ObjSense, Sense

try:  # private scipy module; guarded so only the fallback path remains
    import scipy.optimize._highspy._core as _hcore
    _HAVE_DIRECT = True
except Exception:  # pragma: no cover - depends on the scipy build
    _hcore = None
    _HAVE_DIRECT = False

# flip to False to force the linprog path (useful when debugging)
USE_DIRECT = True


class NumericalFailure(Exception):
    """The LP backend reported a numerical breakdown."""


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    status: LpStatus
    objective: float
    primal: Optional[np.ndarray] = None
    # duals aligned with the model's constraint list (sign convention of a
    # minimization Lagrangian; only populated when status is OPTIMAL)
    duals: Optional[np.ndarray] = None


def _make_options():
    opts = _hcore.HighsOptions()
    opts.output_flag = False
    opts.log_to_console = False
    opts.threads = 1
    return opts


class CompiledLp:
    """Row-form snapshot of a model with integrality relaxed."""

    def __init__(self, model: MipModel):
        model.validate()
        n = model.num_vars
        self.model = model
        self.n = n
        self.sign = 1.0 if model.objective.sense is ObjSense.MIN else -1.0
        c = np.zeros(n)
        for v, coef in model.objective.linear.terms.items():
            c[v] = coef
        self.c = self.sign * c
        self.obj_const = model.objective.linear.constant

        ub_rows: List[Tuple[Dict[int, float], float]] = []
        eq_rows: List[Tuple[Dict[int, float], float]] = []
        # map model constraint index -> (kind, row index, sign)
        self.row_map: List[Tuple[str, int, float]] = []
        for con in model.constraints:
            rhs = con.rhs - con.expr.constant
            if con.sense is Sense.LE:
                self.row_map.append(("ub", len(ub_rows), 1.0))
                ub_rows.append((con.expr.terms, rhs))
            elif con.sense is Sense.GE:
                self.row_map.append(("ub", len(ub_rows), -1.0))
                ub_rows.append(({v: -c_ for v, c_ in con.expr.terms.items()}, -rhs))
            else:
                self.row_map.append(("eq", len(eq_rows), 1.0))
                eq_rows.append((con.expr.terms, rhs))

        self.A_ub, self.b_ub = _rows_to_csr(ub_rows, n)
        self.A_eq, self.b_eq = _rows_to_csr(eq_rows, n)
        self.bounds = np.array([[v.lb, v.ub] for v in model.variables], dtype=float) \
            if n else np.zeros((0, 2))

        self.n_ub = len(ub_rows)
        self.n_eq_rows = len(eq_rows)
        self._highs = None
        if _HAVE_DIRECT:
            # combined row form lhs <= Ax <= rhs with the ub block first,
            # stored as flat CSR arrays so cut rows append cheaply
            flat_data: List[float] = []
            flat_idx: List[int] = []
            indptr = [0]
            for terms, _ in ub_rows + eq_rows:
                flat_idx.extend(terms.keys())
                flat_data.extend(terms.values())
                indptr.append(len(flat_idx))
            self._row_data = np.array(flat_data, dtype=float)
            self._row_idx = np.array(flat_idx, dtype=np.int32)
            self._row_indptr = np.array(indptr, dtype=np.int32)
            self._lhs = np.concatenate([
                np.full(self.n_ub, -np.inf),
                np.array([b for _, b in eq_rows], dtype=float),
            ])
            self._rhs = np.concatenate([
                np.array([b for _, b in ub_rows], dtype=float),
                self._lhs[self.n_ub:],
            ])

    def _direct_solver(self):
        if self._highs is None:
            self._highs = _hcore._Highs()
            self._highs.passOptions(_make_options())
        return self._highs

    def _solve_direct(self, bounds, extra_ub, c):
        """One HiGHS solve through the scipy binding, no parsing layers.

        Returns None when the status is ambiguous so the caller can fall
        back to the retry chain.
        """
        data, idx, indptr = self._row_data, self._row_idx, self._row_indptr
        lhs, rhs = self._lhs, self._rhs
        if extra_ub:
            xdata: List[float] = []
            xidx: List[int] = []
            xptr = [indptr[-1]]
            xrhs = []
            for terms, b in extra_ub:
                xidx.extend(terms.keys())
                xdata.extend(terms.values())
                xptr.append(xptr[-1] + len(terms))
                xrhs.append(b)
            data = np.concatenate([data, np.array(xdata, dtype=float)])
            idx = np.concatenate([idx, np.array(xidx, dtype=np.int32)])
            indptr = np.concatenate([indptr, np.array(xptr[1:], dtype=np.int32)])
            lhs = np.concatenate([lhs, np.full(len(extra_ub), -np.inf)])
            rhs = np.concatenate([rhs, np.array(xrhs, dtype=float)])
        m = len(rhs)
        csc = sp.csr_matrix((data, idx, indptr), shape=(m, self.n)).tocsc()

        lp = _hcore.HighsLp()
        lp.num_col_ = self.n
        lp.num_row_ = m
        lp.a_matrix_.num_col_ = self.n
        lp.a_matrix_.num_row_ = m
        lp.a_matrix_.format_ = _hcore.MatrixFormat.kColwise
        lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
        lp.a_matrix_.index_ = csc.indices.astype(np.int32)
        lp.a_matrix_.value_ = csc.data
        lp.col_cost_ = c
        lp.col_lower_ = np.ascontiguousarray(bounds[:, 0])
        lp.col_upper_ = np.ascontiguousarray(bounds[:, 1])
        lp.row_lower_ = lhs
        lp.row_upper_ = rhs

        highs = self._direct_solver()
        if highs.passModel(lp) == _hcore.HighsStatus.kError:
            return None
        if highs.run() == _hcore.HighsStatus.kError:
            return None
        status = highs.getModelStatus()
        if status == _hcore.HighsModelStatus.kOptimal:
            sol = highs.getSolution()
            info = highs.getInfo()
            x = np.asarray(sol.col_value, dtype=float)
            duals = np.asarray(sol.row_dual, dtype=float)
            return 0, float(info.objective_function_value), x, duals
        if status == _hcore.HighsModelStatus.kInfeasible:
            return 2, math.inf, None, None
        if status == _hcore.HighsModelStatus.kUnbounded:
            return 3, -math.inf, None, None
        return None

    def solve(
        self,
        bound_overrides: Optional[Dict[int, Tuple[float, float]]] = None,
        extra_ub: Optional[Sequence[Tuple[Dict[int, float], float]]] = None,
        objective: Optional[np.ndarray] = None,
        want_duals: bool = False,
    ) -> LpResult:
        """Solve the relaxation, optionally with tightened bounds and cut rows.

        ``objective`` overrides the compiled (already sign-normalized)
        minimization cost vector.
        """
        bounds = self.bounds
        if bound_overrides:
            bounds = bounds.copy()
            for v, (lb, ub) in bound_overrides.items():
                bounds[v] = (lb, ub)
            if np.any(bounds[:, 0] > bounds[:, 1] + 1e-12):
                return LpResult(LpStatus.INFEASIBLE, math.inf)

        c = self.c if objective is None else objective

        status = fun = x = row_dual = None
        if _HAVE_DIRECT and USE_DIRECT:
            out = self._solve_direct(bounds, extra_ub, c)
            if out is not None:
                status, fun, x, row_dual = out

        if status is None:
            out = self._solve_linprog(bounds, extra_ub, c)
            status, fun, x, row_dual = out

        if status == 0:
            obj = self.sign * fun + (self.obj_const if objective is None else 0.0)
            duals = None
            if want_duals and row_dual is not None:
                duals = np.zeros(len(self.row_map))
                for k, (kind, idx, sgn) in enumerate(self.row_map):
                    pos = idx if kind == "ub" else self.n_ub + idx
                    duals[k] = sgn * row_dual[pos]
            return LpResult(LpStatus.OPTIMAL, obj, x, duals)
        if status == 2:
            return LpResult(LpStatus.INFEASIBLE, math.inf if self.sign > 0 else -math.inf)
        if status == 3:
            return LpResult(LpStatus.UNBOUNDED, -math.inf if self.sign > 0 else math.inf)
        raise NumericalFailure("LP backend failure")

    def _solve_linprog(self, bounds, extra_ub, c):
        A_ub, b_ub = self.A_ub, self.b_ub
        n_extra = 0
        if extra_ub:
            A_extra, b_extra = _rows_to_csr(list(extra_ub), self.n)
            n_extra = len(b_extra)
            if A_ub is not None:
                A_ub = sp.vstack([A_ub, A_extra], format="csr")
                b_ub = np.concatenate([b_ub, b_extra])
            else:
                A_ub, b_ub = A_extra, b_extra

        res = None
        # retry without presolve, then with the interior-point variant; big-M
        # rows occasionally push the simplex presolve into an unknown status
        for method, presolve in (("highs", True), ("highs", False), ("highs-ipm", False)):
            res = linprog(
                c,
                A_ub=A_ub,
                b_ub=b_ub,
                A_eq=self.A_eq,
                b_eq=self.b_eq,
                bounds=bounds,
                method=method,
                options={"presolve": presolve},
            )
            if res.status in (0, 2, 3):
                break
        if res.status == 0:
            # rebuild the combined row-dual layout (ub block then eq block)
            row_dual = None
            mu_ub = res.ineqlin.marginals if res.ineqlin is not None else np.zeros(0)
            mu_eq = res.eqlin.marginals if res.eqlin is not None else np.zeros(0)
            if n_extra:
                mu_ub = mu_ub[:len(mu_ub) - n_extra]
            row_dual = np.concatenate([mu_ub, mu_eq]) if (len(mu_ub) + len(mu_eq)) else np.zeros(0)
            return 0, float(res.fun), res.x, row_dual
        if res.status in (2, 3):
            return res.status, math.inf, None, None
        raise NumericalFailure(f"LP backend failure: {res.message}")


def _rows_to_csr(rows: List[Tuple[Dict[int, float], float]], n: int):
    if not rows:
        return None, None
    data, indices, indptr, rhs = [], [], [0], []
    for terms, b in rows:
        for v, coef in terms.items():
            indices.append(v)
            data.append(coef)
        indptr.append(len(indices))
        rhs.append(b)
    A = sp.csr_matrix((data, indices, indptr), shape=(len(rows), n))
    return A, np.array(rhs)


def solve_lp(model: MipModel, want_duals: bool = False) -> LpResult:
    """Solve the model's LP relaxation (integrality dropped, linear objective).

    Raises ValueError when a quadratic objective is present; quadratic terms
    are the caller's responsibility.
    """
    if not model.objective.is_linear():
        raise ValueError("solve_lp requires a linear objective")
    return CompiledLp(model).solve(want_duals=want_duals)


class ExprOptimizer:
    """Repeated throwaway-objective LP solves over one compiled relaxation.

    Compiling the model once and swapping cost vectors is much cheaper than
    calling :func:`minimize_expr` in a loop.
    """

    def __init__(self, model: MipModel):
        self.compiled = CompiledLp(model)

    def minimize(self, expr: LinExpr, maximize: bool = False) -> LpResult:
        c = np.zeros(self.compiled.n)
        for v, coef in expr.terms.items():
            c[v] += coef
        res = self.compiled.solve(objective=-c if maximize else c)
        if res.status is LpStatus.OPTIMAL:
            val = float(np.dot(c, res.primal)) + expr.constant
            return LpResult(res.status, val, res.primal, None)
        if res.status is LpStatus.UNBOUNDED:
            return LpResult(res.status, math.inf if maximize else -math.inf)
        return res


def minimize_expr(model: MipModel, expr: LinExpr, maximize: bool = False) -> LpResult:
    """Optimize a throwaway linear expression over the model's LP relaxation."""
    return ExprOptimizer(model).minimize(expr, maximize=maximize)
