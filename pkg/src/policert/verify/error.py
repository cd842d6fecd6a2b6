"""Worst-case approximation error between two policies over a polytope."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..encoders import EncodingError, encode_inf_norm, encode_one_norm
from ..geometry import Polytope
from ..mip.model import LinExpr, MipModel, ObjSense, Sense
from ..policies import Policy
from ..solver import MipStatus, SolveConfig, solve_milp
from .report import CERT_TOL, VerifyReport, solver_diagnostics

WITNESS_TOL = 1e-5


def default_config() -> SolveConfig:
    # tight gap so certified bounds clear the decision tolerances
    return SolveConfig(gap_tol=1e-7)


def encode_policy_pair(
    model: MipModel,
    psi1: Policy,
    psi2: Policy,
    X: Polytope,
    tighten: bool = False,
):
    """Shared input variables, both policy graphs, and difference variables.

    Returns (x_vars, t_vars, t_box) with t = psi1(x) - psi2(x).
    """
    if psi1.input_dim != psi2.input_dim:
        raise EncodingError("policies have different input dimensions")
    if psi1.output_dim != psi2.output_dim:
        raise EncodingError("policies have different output dimensions")
    lo, hi = X.bounding_box()
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
        raise EncodingError("input domain must be bounded")
    if lo.size != psi1.input_dim:
        raise EncodingError("domain dimension does not match the policies")

    xs = [model.add_variable(lb=float(a), ub=float(b), name="x")
          for a, b in zip(lo, hi)]
    for c, d in zip(X.C, X.d):
        e = LinExpr()
        for v, coef in zip(xs, c):
            if coef != 0.0:
                e.add_term(v, float(coef))
        model.add_linear(e, Sense.LE, float(d), "domain")

    box = (lo, hi)
    b1 = psi1.encode(model, xs, box, tighten=tighten)
    b2 = psi2.encode(model, xs, box, tighten=tighten)
    lo1, hi1 = psi1.output_box(box)
    lo2, hi2 = psi2.output_box(box)
    t_lo, t_hi = lo1 - hi2, hi1 - lo2
    ts = []
    for u1, u2, a, b in zip(b1.outputs, b2.outputs, t_lo, t_hi):
        t = model.add_variable(lb=float(a), ub=float(b), name="diff")
        model.add_linear(LinExpr({t: 1.0, u1: -1.0, u2: 1.0}), Sense.EQ, 0.0,
                         "difference")
        ts.append(t)
    return xs, ts, (t_lo, t_hi)


def _status_name(status: MipStatus) -> str:
    return status.value


def _evaluate_difference(psi1: Policy, psi2: Policy, x: np.ndarray) -> np.ndarray:
    return np.atleast_1d(psi1.forward(x)) - np.atleast_1d(psi2.forward(x))


def worst_case_error(
    psi1: Policy,
    psi2: Policy,
    X: Polytope,
    norm: str = "inf",
    config: Optional[SolveConfig] = None,
    tighten: bool = False,
) -> VerifyReport:
    """gamma = max over X of the norm of psi1(x) - psi2(x), as one MILP.

    ``norm`` is "inf" or "one". The report's value is the incumbent gamma,
    the bound a certified upper bound, and the witness is re-evaluated
    through the policies' own forward passes.
    """
    if norm not in ("inf", "one"):
        raise ValueError(f"unknown norm {norm!r}")
    cfg = config or default_config()
    model = MipModel("worst-case-error")
    xs, ts, t_box = encode_policy_pair(model, psi1, psi2, X, tighten=tighten)
    enc = encode_inf_norm if norm == "inf" else encode_one_norm
    tau = enc(model, ts, t_box).outputs[0]
    model.objective.sense = ObjSense.MAX
    model.objective.linear.add_term(tau, 1.0)

    sol = solve_milp(model, cfg)
    diag = solver_diagnostics(sol, cfg, model)
    diag["norm"] = norm
    witness = None
    if sol.incumbent is not None:
        witness = np.array([sol.incumbent[v] for v in xs])
        delta = _evaluate_difference(psi1, psi2, witness)
        gamma_oracle = float(np.max(np.abs(delta))) if norm == "inf" \
            else float(np.sum(np.abs(delta)))
        diag["witness_objective"] = gamma_oracle
        diag["witness_mismatch"] = abs(gamma_oracle - sol.objective)
        if diag["witness_mismatch"] > WITNESS_TOL:
            diag["witness_consistent"] = False
        else:
            diag["witness_consistent"] = True
    return VerifyReport(
        kind="WorstCaseError",
        status=_status_name(sol.status),
        value=sol.objective,
        bound=sol.bound,
        gap=sol.gap,
        witness_x0=witness,
        certified=sol.status is MipStatus.OPTIMAL,
        diagnostics=diag,
    )


def error_bounding_box(
    psi1: Policy,
    psi2: Policy,
    X: Polytope,
    config: Optional[SolveConfig] = None,
    tighten: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Componentwise bounds on psi1(x) - psi2(x) over X, via 2m MILPs.

    Returns (lower, upper); both are certified outer bounds (solver bound,
    not incumbent, on each coordinate).
    """
    cfg = config or default_config()
    m = psi1.output_dim
    lower = np.empty(m)
    upper = np.empty(m)
    for i in range(m):
        for maximize in (False, True):
            model = MipModel("error-box")
            _, ts, _ = encode_policy_pair(model, psi1, psi2, X, tighten=tighten)
            model.objective.sense = ObjSense.MAX if maximize else ObjSense.MIN
            model.objective.linear.add_term(ts[i], 1.0)
            sol = solve_milp(model, cfg)
            if sol.status is MipStatus.INFEASIBLE:
                raise EncodingError("domain polytope is empty")
            if maximize:
                upper[i] = sol.bound
            else:
                lower[i] = sol.bound
    return lower, upper
