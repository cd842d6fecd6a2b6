"""Indefinite MIQP solver.

The quadratic form is eigendecomposed; each nonzero eigendirection gets a
rotated coordinate y = v'x and an envelope variable w standing in for y**2.
Convex directions are under-estimated by lazily added tangents, concave
directions over-estimated by the secant on the current y interval, and the
remaining envelope gap is closed by spatial branching (midpoint splits)
interleaved with binary branching.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..mip.model import LinConstraint, LinExpr, MipModel, ObjSense, Sense, VarKind
from .branch_bound import BranchAndBound, MipSolution, SpatialVar
from .config import SolveConfig

EIG_ZERO_TOL = 1e-10


class UnboundedQuadraticVariable(Exception):
    """A variable with quadratic objective terms lacks finite bounds."""


def _clone_linear_part(model: MipModel) -> MipModel:
    out = MipModel(model.name + "+rotated")
    for v in model.variables:
        out.add_variable(v.kind, v.lb, v.ub, v.name)
    for con in model.constraints:
        out.add_constraint(LinConstraint(con.expr.copy(), con.sense, con.rhs, con.name))
    return out


def solve_miqp(model: MipModel, config: Optional[SolveConfig] = None) -> MipSolution:
    """Solve a mixed-integer program with a (possibly indefinite) quadratic objective."""
    cfg = config or SolveConfig()
    obj = model.objective
    if obj.is_linear():
        return BranchAndBound(model, cfg).solve()

    minimize = obj.sense is ObjSense.MIN
    flip = 1.0 if minimize else -1.0

    quad_vars = sorted({v for pair in obj.quad for v in pair})
    for v in quad_vars:
        var = model.variables[v]
        if not (math.isfinite(var.lb) and math.isfinite(var.ub)):
            raise UnboundedQuadraticVariable(
                f"variable {var.name or var.id} appears quadratically but has "
                f"bounds [{var.lb}, {var.ub}]"
            )
    pos = {v: i for i, v in enumerate(quad_vars)}
    k = len(quad_vars)
    H = np.zeros((k, k))
    for (i, j), q in obj.quad.items():
        a, b = pos[i], pos[j]
        H[a, b] += flip * q
        if a != b:
            H[b, a] += flip * q
    eigvals, eigvecs = np.linalg.eigh(H)

    aug = _clone_linear_part(model)
    aug.objective.sense = ObjSense.MIN
    for v, c in obj.linear.terms.items():
        aug.objective.linear.add_term(v, flip * c)
    aug.objective.linear.constant = flip * obj.linear.constant

    lbs = np.array([model.variables[v].lb for v in quad_vars])
    ubs = np.array([model.variables[v].ub for v in quad_vars])
    spatial = []
    for idx in range(k):
        lam = eigvals[idx]
        if abs(lam) < EIG_ZERO_TOL:
            continue
        vcol = eigvecs[:, idx]
        # interval bounds of v'x over the variable box
        ylo = float(np.sum(np.where(vcol >= 0, vcol * lbs, vcol * ubs)))
        yhi = float(np.sum(np.where(vcol >= 0, vcol * ubs, vcol * lbs)))
        y = aug.add_variable(VarKind.CONTINUOUS, ylo, yhi, f"rot[{idx}]")
        wlo = 0.0 if ylo <= 0.0 <= yhi else min(ylo * ylo, yhi * yhi)
        whi = max(ylo * ylo, yhi * yhi)
        w = aug.add_variable(VarKind.CONTINUOUS, wlo, whi, f"rotsq[{idx}]")
        link = LinExpr({y: 1.0})
        for v, coef in zip(quad_vars, vcol):
            if coef != 0.0:
                link.add_term(v, -float(coef))
        aug.add_linear(link, Sense.EQ, 0.0, f"rotlink[{idx}]")
        aug.objective.linear.add_term(w, 0.5 * float(lam))
        spatial.append(SpatialVar(y, w, float(lam)))

    def exact(x: np.ndarray) -> float:
        # original objective, minimization sense
        return flip * obj.value(x)

    engine = BranchAndBound(
        aug, cfg, spatial=spatial, exact_objective=exact, feasibility_model=model
    )
    sol = engine.solve()
    if not minimize:
        sol = MipSolution(
            sol.status,
            sol.incumbent,
            -sol.objective,
            -sol.bound,
            sol.gap,
            sol.nodes,
            sol.wall_time,
        )
    return sol
