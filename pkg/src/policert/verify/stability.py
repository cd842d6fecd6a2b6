"""Lyapunov-decrease verification of approximate MPC policies.

Two certificates over an initial-state region X0:

* sufficient: there is a feasible MPC trajectory starting with the policy
  output whose cost exceeds the optimal cost by at most one stage cost
  (minus a margin); the optimal cost is then a Lyapunov function.
* direct: the optimal cost itself decreases along the approximate closed
  loop, with no terminal-set assumption.

Both reduce to minimizing

    xi = J(x0) [+ stage cost] - inner optimal cost - margin

over the initial state, an optimal outer trajectory, and the policy graph.
The inner optimal cost is a convex function of the low-dimensional
parameter p = (x0, u), so instead of embedding its optimality system we
overestimate it on a parameter box by interpolating exact QP solves at the
box vertices (Jensen's inequality). The resulting program is a convex MIQP
whose bound soundly under-estimates xi; the interpolation gap shrinks
quadratically with the box, so boxes that fail to certify are bisected and
re-solved. Keeping dual variables out of the objective is what keeps every
relaxation bounded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..control.mpc import CondensedQp, MpcSpec, build_inner_qp, condense_mpc
from ..encoders import EncodingError
from ..geometry import EmptyPolytope, Polytope, UnboundedPolytope
from ..mip.model import LinExpr, MipModel, ObjSense, QuadObjective, Sense
from ..policies import Policy
from ..qp_oracle import QpInfeasible, solve_qp
from ..solver import MipStatus, SolveConfig, minimize_expr, solve_milp, solve_miqp
from ..solver.lp import LpStatus
from .error import default_config
from .report import CERT_TOL, VerifyReport, solver_diagnostics


class Psi2NotZeroAtOrigin(Exception):
    """The policy does not reproduce the equilibrium input at x_eq."""


class RowInfeasible(Warning):
    pass


ORIGIN_TOL = 1e-6

# exact-penalty weight extending the inner value function outside its
# feasible projection; it only needs to dominate some multiplier of the
# inner QP, the same kind of assumption as a complementarity big-M
PENALTY_WEIGHT = 1e5

MAX_PIECES = 4000
# per-piece branching budget: a piece that cannot be resolved quickly is
# cheaper to bisect (shrinking boxes tightens every big-M constant) than
# to grind down with binary branching
PIECE_NODE_LIMIT = 400
MIN_WIDTH_FRAC = 1e-6


def default_epsilon(Q) -> float:
    """Small positive margin scaled to the state cost curvature."""
    lam = float(np.min(np.linalg.eigvalsh(np.atleast_2d(np.asarray(Q, float)))))
    return max(1e-6 * min(1.0, lam), 1e-12)


def feasible_x0_box(outer: CondensedQp, X: Polytope) -> Tuple[np.ndarray, np.ndarray]:
    """Bounding box of the initial states with a feasible MPC trajectory."""
    qp = outer.qp
    n = outer.n
    lo, hi = X.bounding_box()
    model = MipModel("feasible-box")
    xs = [model.add_variable(lb=float(a), ub=float(b)) for a, b in zip(lo, hi)]
    zs = [model.add_variable(lb=float(a), ub=float(b))
          for a, b in zip(*outer.z_box)]
    for c, d in zip(X.C, X.d):
        e = LinExpr()
        for v, coef in zip(xs, c):
            if coef != 0.0:
                e.add_term(v, float(coef))
        model.add_linear(e, Sense.LE, float(d))
    for i in range(qp.n_eq):
        e = LinExpr()
        for v, coef in zip(zs, qp.A[i]):
            if coef != 0.0:
                e.add_term(v, float(coef))
        for v, coef in zip(xs, qp.B[i]):
            if coef != 0.0:
                e.add_term(v, -float(coef))
        model.add_linear(e, Sense.EQ, float(qp.b[i]))
    for i in range(qp.n_ineq):
        e = LinExpr()
        for v, coef in zip(zs, qp.F[i]):
            if coef != 0.0:
                e.add_term(v, float(coef))
        for v, coef in zip(xs, qp.G[i]):
            if coef != 0.0:
                e.add_term(v, -float(coef))
        model.add_linear(e, Sense.LE, float(qp.g[i]))
    box_lo = np.empty(n)
    box_hi = np.empty(n)
    for k in range(n):
        r_lo = minimize_expr(model, LinExpr({xs[k]: 1.0}))
        r_hi = minimize_expr(model, LinExpr({xs[k]: 1.0}), maximize=True)
        if r_lo.status is not LpStatus.OPTIMAL or r_hi.status is not LpStatus.OPTIMAL:
            raise EncodingError("MPC feasible set is empty or unbounded")
        box_lo[k], box_hi[k] = r_lo.objective, r_hi.objective
    return box_lo, box_hi


def default_x0_region(mpc: MpcSpec) -> Polytope:
    """Feasible-set bounding box intersected with the state constraints."""
    outer = condense_mpc(mpc)
    lo, hi = feasible_x0_box(outer, mpc.X)
    return Polytope.from_box(lo, hi).intersect(mpc.X)


@dataclass
class _Assembly:
    model: MipModel
    x0_vars: List[int]
    u_vars: List[int]
    outer_z: List[int]
    inner_z: List[int]
    outer: CondensedQp
    inner: CondensedQp
    x_box: Tuple[np.ndarray, np.ndarray]
    u_box: Tuple[np.ndarray, np.ndarray]


def _add_polytope_rows(model, vars_, S: Polytope, tag: str) -> None:
    for c, d in zip(S.C, S.d):
        e = LinExpr()
        for v, coef in zip(vars_, c):
            if coef != 0.0:
                e.add_term(v, float(coef))
        model.add_linear(e, Sense.LE, float(d), tag)


def _add_qp_rows(model, zs, ps, qp, tag: str) -> None:
    """Primal feasibility of a parametric QP: Az = Bp + b, Fz <= Gp + g."""
    for i in range(qp.n_eq):
        e = LinExpr()
        for v, coef in zip(zs, qp.A[i]):
            if coef != 0.0:
                e.add_term(v, float(coef))
        for v, coef in zip(ps, qp.B[i]):
            if coef != 0.0:
                e.add_term(v, -float(coef))
        model.add_linear(e, Sense.EQ, float(qp.b[i]), tag + "-eq")
    for i in range(qp.n_ineq):
        e = LinExpr()
        for v, coef in zip(zs, qp.F[i]):
            if coef != 0.0:
                e.add_term(v, float(coef))
        for v, coef in zip(ps, qp.G[i]):
            if coef != 0.0:
                e.add_term(v, -float(coef))
        model.add_linear(e, Sense.LE, float(qp.g[i]), tag + "-con")


def _piece_u_box(mpc: MpcSpec, psi2: Policy, mode: str,
                 x_box: Tuple[np.ndarray, np.ndarray],
                 u_bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None):
    """Bounds on the policy output over a piece, clamped to the input set
    in sufficient mode (the pinned first input must lie there anyway).
    Returns None when empty."""
    u_lo, u_hi = psi2.output_box(x_box)
    if mode == "sufficient":
        set_lo, set_hi = mpc.U.bounding_box()
        cl, ch = np.maximum(u_lo, set_lo), np.minimum(u_hi, set_hi)
        if np.all(cl <= ch):
            u_lo, u_hi = cl, ch
    if u_bounds is not None:
        u_lo = np.maximum(u_lo, u_bounds[0])
        u_hi = np.minimum(u_hi, u_bounds[1])
    if np.any(u_lo > u_hi):
        return None
    return u_lo, u_hi


def _assemble(
    mpc: MpcSpec,
    psi2: Policy,
    X0: Polytope,
    outer: CondensedQp,
    inner: CondensedQp,
    mode: str,
    x_bounds: Tuple[np.ndarray, np.ndarray],
    u_bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    tighten: bool = False,
    param_poly: Optional[Polytope] = None,
) -> Optional[_Assembly]:
    """Feasibility model tying x0, the policy output, an outer trajectory,
    and a (primal-feasible) inner trajectory. Returns None when the box is
    trivially empty.

    With ``param_poly`` the trajectory copies are dropped: the objective is
    then expected to carry the outer and inner values as parameter
    quadratics, and the polytope rows confine (x0, u) to the parameters
    where the inner problem is feasible. This keeps the model small."""
    n, m = mpc.system.n, mpc.system.m
    x_lo, x_hi = x_bounds
    if np.any(~np.isfinite(x_lo)) or np.any(~np.isfinite(x_hi)):
        raise EncodingError("initial-state region must be bounded")
    if np.any(x_lo > x_hi):
        return None

    model = MipModel(f"stability-{mode}")
    x0 = [model.add_variable(lb=float(a), ub=float(b), name="x0")
          for a, b in zip(x_lo, x_hi)]
    _add_polytope_rows(model, x0, X0, "x0-domain")
    _add_polytope_rows(model, x0, mpc.X, "state-set")

    zs: List[int] = []
    if param_poly is None:
        # outer trajectory: primal feasibility only; minimizing the
        # objective drives its cost to the optimum J*(x0)
        zs = [model.add_variable(lb=float(a), ub=float(b), name="outer")
              for a, b in zip(*outer.z_box)]
        _add_qp_rows(model, zs, x0, outer.qp, "outer")

    x_box = (x_lo, x_hi)
    block2 = psi2.encode(model, x0, x_box, tighten=tighten)
    u_vars = list(block2.outputs)
    if len(u_vars) != m:
        raise EncodingError("policy output dimension does not match the input")

    ub = _piece_u_box(mpc, psi2, mode, x_box, u_bounds)
    if ub is None:
        return None
    u_lo, u_hi = ub
    for v, a, b in zip(u_vars, u_lo, u_hi):
        var = model.variables[v]
        lo2, hi2 = max(var.lb, float(a)), min(var.ub, float(b))
        if lo2 > hi2:
            return None
        model.set_bounds(v, lo2, hi2)

    zt: List[int] = []
    if param_poly is None:
        # inner trajectory: primal feasibility confines (x0, u) to
        # parameters where the inner problem has a solution at all
        zt = [model.add_variable(lb=float(a), ub=float(b), name="inner")
              for a, b in zip(*inner.z_box)]
        _add_qp_rows(model, zt, x0 + u_vars, inner.qp, "inner")
    else:
        _add_polytope_rows(model, x0 + u_vars, param_poly, "feasible-params")

    return _Assembly(model, x0, u_vars, zs, zt, outer, inner,
                     x_box, (u_lo, u_hi))


def _inner_value(inner: CondensedQp, p: np.ndarray) -> float:
    """Exact inner optimal cost at a fixed parameter.

    The inequality constraints carry an exact-penalty slack, so the value
    extends to a finite convex function outside the feasible projection
    while agreeing with the true optimum inside it.
    """
    qp = inner.qp
    p = np.asarray(p, dtype=float)
    n_z, m_i = qp.n_z, qp.n_ineq
    P = np.zeros((n_z + m_i, n_z + m_i))
    P[:n_z, :n_z] = qp.P
    P[n_z:, n_z:] = 1e-9 * np.eye(m_i)
    q = np.concatenate([qp.Q @ p + qp.q, PENALTY_WEIGHT * np.ones(m_i)])
    A = b = None
    if qp.n_eq:
        A = np.hstack([qp.A, np.zeros((qp.n_eq, m_i))])
        b = qp.B @ p + qp.b
    F = np.block([
        [qp.F, -np.eye(m_i)],
        [np.zeros((m_i, n_z)), -np.eye(m_i)],
    ])
    g = np.concatenate([qp.G @ p + qp.g, np.zeros(m_i)])
    sol = solve_qp(P, q, A=A, b=b, F=F, g=g)
    return float(sol.objective) + inner.offset(p)


def _pre_set(S: Polytope, A: np.ndarray, B: np.ndarray, r: np.ndarray,
             U: Polytope) -> Polytope:
    """States x with some input u in U steering Ax + Bu + r into S."""
    n, m = A.shape[1], B.shape[1]
    C = np.vstack([
        np.hstack([S.C @ A, S.C @ B]),
        np.hstack([np.zeros((U.num_rows, n)), U.C]),
    ])
    d = np.concatenate([S.d - S.C @ r, U.d])
    return Polytope(C, d).project(list(range(n)))


def _param_polytope(mpc: MpcSpec, mode: str) -> Polytope:
    """Parameters p = (x0, u) for which the inner problem is feasible.

    Backward recursion of the constrained reachability sets; the first
    stage then maps the recursion's entry set through the dynamics.
    """
    sys_ = mpc.system
    r = mpc.residual
    S = mpc.X if mpc.X_N is None else mpc.X.intersect(mpc.X_N).remove_redundant()
    for _ in range(mpc.N - 1):
        S = mpc.X.intersect(
            _pre_set(S, sys_.A, sys_.B, r, mpc.U)).remove_redundant()
    AB = np.hstack([sys_.A, sys_.B])
    if mode == "sufficient":
        # the pinned first input must lie in U and land in the entry set
        C = np.vstack([
            S.C @ AB,
            np.hstack([np.zeros((mpc.U.num_rows, sys_.n)), mpc.U.C]),
        ])
        d = np.concatenate([S.d - S.C @ r, mpc.U.d])
    else:
        # the shifted initial state keeps its first input free
        T = _pre_set(S, sys_.A, sys_.B, r, mpc.U)
        C = T.C @ AB
        d = T.d - T.C @ r
    return Polytope(C, d).remove_redundant()


# inflation of the piece slice before vertex enumeration; must exceed the
# MIP feasibility tolerance so boundary parameters stay representable
SLICE_BUMPS = (1e-6, 1e-4)
_TRACE = False  # set True to print per-piece progress while debugging


def _slice_vertices(param_poly: Polytope, p_lo: np.ndarray,
                    p_hi: np.ndarray) -> Optional[np.ndarray]:
    """Vertices of a slightly inflated (piece box) & (feasible parameters).

    The inflation keeps lower-dimensional slices enumerable and covers the
    solver's feasibility tolerance; the vertex values absorb any tiny
    constraint violation through the exact-penalty extension. Returns None
    when the slice is empty.
    """
    R = param_poly.intersect(Polytope.from_box(p_lo, p_hi))
    scale = np.maximum(np.max(np.abs(R.C), axis=1), 1e-12)
    for bump in SLICE_BUMPS:
        try:
            verts = Polytope(R.C, R.d + bump * scale).vertices()
        except EmptyPolytope:
            return None
        except Exception:
            # degenerate slice that qhull cannot handle at this inflation
            continue
        if verts.ndim == 2 and verts.shape[0] >= 1:
            return verts
    return None


ACTIVE_MARGIN = 1e-7


def _affine_max(M: np.ndarray, const: np.ndarray, p_lo: np.ndarray,
                p_hi: np.ndarray) -> np.ndarray:
    """Row-wise exact maximum of M p + const over the box."""
    return np.maximum(M, 0.0) @ p_hi + np.minimum(M, 0.0) @ p_lo + const


def _independent_rows(A: np.ndarray, F_act: np.ndarray,
                      lam_act: np.ndarray) -> np.ndarray:
    """Indices of active rows independent of each other and of the equality
    rows, preferring rows with larger multipliers."""
    basis = A.reshape(-1, F_act.shape[1]).copy()
    keep = []
    for i in np.argsort(-lam_act):
        f = F_act[i]
        if basis.shape[0]:
            coef = np.linalg.lstsq(basis.T, f, rcond=None)[0]
            resid = f - basis.T @ coef
        else:
            resid = f
        if np.linalg.norm(resid) > 1e-8 * max(1.0, np.linalg.norm(f)):
            keep.append(i)
            basis = np.vstack([basis, f[None, :]])
    return np.sort(np.array(keep, dtype=int))


def _anchor_active_set(qp, p_c: np.ndarray):
    """Active-set guess from an exact solve at the anchor parameter."""
    try:
        sol = solve_qp(qp.P, qp.Q @ p_c + qp.q,
                       A=qp.A if qp.n_eq else None,
                       b=qp.B @ p_c + qp.b if qp.n_eq else None,
                       F=qp.F if qp.n_ineq else None,
                       g=qp.G @ p_c + qp.g if qp.n_ineq else None)
    except (QpInfeasible, ValueError):
        return None
    act = np.where(sol.lam > ACTIVE_MARGIN)[0] if qp.n_ineq else np.array([], int)
    if len(act):
        # keep a linearly independent subset of active rows (duplicated box
        # rows are common); dropped rows are re-checked by the callers
        act = act[_independent_rows(qp.A, qp.F[act], sol.lam[act])]
    return act


def _kkt_affine(qp, act: np.ndarray):
    """Affine solution and multiplier maps of a frozen active set.

    Returns (Z, zc, L, lc) with z(p) = Z p + zc and multipliers of the
    active rows lam(p) = L p + lc, or None when the system is singular.
    """
    F_act, G_act, g_act = qp.F[act], qp.G[act], qp.g[act]
    n_z, n_eq, n_a = qp.n_z, qp.n_eq, len(act)
    n_p = qp.n_x
    K = np.block([
        [qp.P, qp.A.T, F_act.T],
        [qp.A, np.zeros((n_eq, n_eq + n_a))],
        [F_act, np.zeros((n_a, n_eq + n_a))],
    ])
    rhs = np.zeros((n_z + n_eq + n_a, n_p + 1))
    rhs[:n_z, :n_p] = -qp.Q
    rhs[n_z:n_z + n_eq, :n_p] = qp.B
    rhs[n_z + n_eq:, :n_p] = G_act
    rhs[:n_z, n_p] = -qp.q
    rhs[n_z:n_z + n_eq, n_p] = qp.b
    rhs[n_z + n_eq:, n_p] = g_act
    try:
        kkt = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(kkt).all():
        return None
    if np.max(np.abs(K @ kkt - rhs)) > 1e-8 * max(1.0, np.max(np.abs(rhs))):
        return None
    Z, zc = kkt[:n_z, :n_p], kkt[:n_z, n_p]
    L, lc = -kkt[n_z + n_eq:, :n_p], -kkt[n_z + n_eq:, n_p]
    return Z, zc, L, lc


def _map_quadratic(cq: CondensedQp, Z: np.ndarray, zc: np.ndarray):
    """Cost of the parametric QP along an affine solution map, with the
    condensation offsets folded in: value(p) = 0.5 p'Hp + g'p + c."""
    qp = cq.qp
    H = Z.T @ qp.P @ Z + Z.T @ qp.Q + qp.Q.T @ Z + 2.0 * cq.c_quad
    g = Z.T @ (qp.P @ zc + qp.q) + qp.Q.T @ zc + cq.c_lin
    c = 0.5 * float(zc @ qp.P @ zc) + float(qp.q @ zc) + cq.c0
    return H, g, c


def _region_inner(inner: CondensedQp, p_lo: np.ndarray, p_hi: np.ndarray,
                  anchor: Optional[np.ndarray] = None):
    """Quadratic overestimate of the inner value over the piece.

    Solves the inner problem at the anchor and freezes its active set; the
    resulting solution map z(p) is affine, and as long as it stays primal
    feasible over the whole box (decidable by interval evaluation) its cost
    0.5 p'H p + g'p + c bounds the inner optimum from above. The bound is
    exact on the anchor's critical region and degrades only quadratically
    in the distance past its boundary. Offsets included.
    """
    qp = inner.qp
    p_c = 0.5 * (p_lo + p_hi) if anchor is None else np.clip(anchor, p_lo, p_hi)
    act = _anchor_active_set(qp, p_c)
    if act is None:
        return None
    for _ in range(len(act) + 1):
        maps = _kkt_affine(qp, act)
        if maps is None:
            # ill-conditioned active set; fall back to interpolation
            return None
        Z, zc, L, lc = maps
        if len(act):
            lam_c = L @ p_c + lc
            if lam_c.min() < -1e-9:
                # overcomplete guess (weakly active rows); release the most
                # negative multiplier and re-solve, as in an active-set step
                act = np.delete(act, int(np.argmin(lam_c)))
                continue
        break
    else:
        return None
    # the frozen map must stay primal feasible over the box: then its cost
    # is a valid overestimate of the inner optimum everywhere in the piece,
    # exact on the anchor's critical region (active rows hold with equality
    # by construction, so only the remaining rows need checking)
    inact = np.setdiff1d(np.arange(qp.n_ineq), act)
    if inact.size:
        M = qp.F[inact] @ Z - qp.G[inact]
        const = qp.F[inact] @ zc - qp.g[inact]
        # small positive slack allowed: dropped duplicates of active rows
        # sit exactly at zero
        if np.any(_affine_max(M, const, p_lo, p_hi) > 1e-9):
            return None
    return _map_quadratic(inner, Z, zc)


def _region_lower(cq: CondensedQp, p_lo: np.ndarray, p_hi: np.ndarray,
                  anchor: Optional[np.ndarray] = None):
    """Quadratic lower bound on the optimal value over the box.

    Freezes the anchor's active set; wherever the frozen multiplier map
    stays nonnegative it is a dual-feasible point, and the Lagrangian is
    minimized by the frozen solution map (stationarity with a convex
    objective), so by weak duality the map's cost bounds the optimum from
    below everywhere on the box. Rows whose multiplier can go negative are
    released, which relaxes the problem and only loosens the bound; in the
    limit the bound is the equality-constrained value, so the construction
    fails only when the anchor solve or the linear algebra does. No primal
    feasibility is required. Exact on the anchor's critical region.
    """
    qp = cq.qp
    p_c = 0.5 * (p_lo + p_hi) if anchor is None else np.clip(anchor, p_lo, p_hi)
    act = _anchor_active_set(qp, p_c)
    if act is None:
        return None
    while True:
        maps = _kkt_affine(qp, act)
        if maps is None:
            return None
        Z, zc, L, lc = maps
        if len(act):
            lam_min = -_affine_max(-L, -lc, p_lo, p_hi)
            if lam_min.min() < -1e-10:
                act = np.delete(act, int(np.argmin(lam_min)))
                continue
        break
    return _map_quadratic(cq, Z, zc)


def _quad_box_min(H: np.ndarray, g: np.ndarray, c: float,
                  p_lo: np.ndarray, p_hi: np.ndarray) -> float:
    """Interval lower bound of 0.5 p'Hp + g'p + c over the box."""
    val = float(c) + float(np.sum(np.minimum(g * p_lo, g * p_hi)))
    k = len(p_lo)
    for i in range(k):
        for j in range(i, k):
            h = float(H[i, i]) if i == j else float(H[i, j] + H[j, i])
            if h == 0.0:
                continue
            if i == j:
                lo2 = 0.0 if p_lo[i] <= 0.0 <= p_hi[i] else min(
                    p_lo[i] ** 2, p_hi[i] ** 2)
                hi2 = max(p_lo[i] ** 2, p_hi[i] ** 2)
                val += 0.5 * h * (lo2 if h > 0 else hi2)
            else:
                prods = (p_lo[i] * p_lo[j], p_lo[i] * p_hi[j],
                         p_hi[i] * p_lo[j], p_hi[i] * p_hi[j])
                val += 0.5 * h * (min(prods) if h > 0 else max(prods))
    return val


def _xi_quadratic(mode: str, mpc: MpcSpec, n: int, m: int,
                  outer_quad, inner_quad):
    """Quadratic under-estimate of xi in p = (x0, u): lower-bounded outer
    cost plus stage cost minus the inner overestimate."""
    k = n + m
    H = np.zeros((k, k))
    g = np.zeros(k)
    Ho, go, co = outer_quad
    H[:n, :n] += Ho
    g[:n] += go
    c = float(co)
    if mode == "sufficient":
        Q, R = mpc.Q, mpc.R
        H[:n, :n] += 2.0 * Q
        g[:n] += -2.0 * Q @ mpc.x_eq
        c += float(mpc.x_eq @ Q @ mpc.x_eq)
        H[n:, n:] += 2.0 * R
        g[n:] += -2.0 * R @ mpc.u_eq
        c += float(mpc.u_eq @ R @ mpc.u_eq)
    Hi, gi, ci = inner_quad
    return H - Hi, g - gi, c - float(ci)


def _interpolate_inner_value(
    model: MipModel,
    inner: CondensedQp,
    p_vars: Sequence[int],
    verts: np.ndarray,
) -> int:
    """Variable ell >= inner value at p, by convexity of the value function.

    p is written as a convex combination of the slice vertices and ell as
    the matching combination of the exact vertex values; for a convex value
    function any such combination overestimates it (Jensen), with a gap
    that is quadratic in the slice diameter.
    """
    vals = [_inner_value(inner, v) for v in verts]
    thetas = [model.add_variable(lb=0.0, ub=1.0, name="interp")
              for _ in range(len(verts))]
    model.add_linear(LinExpr({t: 1.0 for t in thetas}), Sense.EQ, 1.0,
                     "interp-sum")
    for k, pv in enumerate(p_vars):
        e = LinExpr({pv: -1.0})
        for t, v in zip(thetas, verts):
            if v[k] != 0.0:
                e.add_term(t, float(v[k]))
        model.add_linear(e, Sense.EQ, 0.0, "interp-p")
    ell = model.add_variable(lb=min(vals), ub=max(vals), name="inner-value")
    e = LinExpr({ell: -1.0})
    for t, val in zip(thetas, vals):
        if val != 0.0:
            e.add_term(t, float(val))
    model.add_linear(e, Sense.EQ, 0.0, "interp-val")
    return ell


def _add_xtcx(obj: QuadObjective, vars: Sequence[int], C: np.ndarray) -> None:
    """Add x'Cx for the listed variables to the 0.5 x'Qx objective store."""
    C = np.atleast_2d(C)
    k = len(vars)
    for i in range(k):
        for j in range(i, k):
            coef = 2.0 * C[i, i] if i == j else C[i, j] + C[j, i]
            if coef != 0.0:
                obj.add_quad(vars[i], vars[j], float(coef))


def _install_objective(asm: _Assembly, mode: str, mpc: MpcSpec,
                       ell: Optional[int] = None,
                       inner_quad=None, outer_quad=None) -> None:
    """Objective xi: outer cost plus stage cost minus the inner value.

    The outer cost is either the trajectory copy's cost (minimization
    drives it to the optimum) or, when the model carries no copy, a
    parameter quadratic lower-bounding it. The inner value enters either
    through an interpolation variable ell or as a parameter quadratic
    overestimating it (exact on the critical region the piece was
    anchored to)."""
    model = asm.model
    obj = QuadObjective()
    model.objective = obj

    if outer_quad is not None:
        Ho, go, co = outer_quad
        _add_xtcx(obj, asm.x0_vars, 0.5 * Ho)
        for v, c in zip(asm.x0_vars, go):
            if c != 0.0:
                obj.linear.add_term(v, float(c))
        obj.linear.constant += float(co)
    else:
        # outer cost 0.5 z'Pz + q'z + offset(x0)
        P = asm.outer.qp.P
        rows, cols = np.nonzero(np.triu(P))
        for i, j in zip(rows, cols):
            obj.add_quad(asm.outer_z[i], asm.outer_z[j], float(P[i, j]))
        for v, c in zip(asm.outer_z, asm.outer.qp.q):
            if c != 0.0:
                obj.linear.add_term(v, float(c))
        obj.linear.constant += asm.outer.c0
        for v, c in zip(asm.x0_vars, asm.outer.c_lin):
            if c != 0.0:
                obj.linear.add_term(v, float(c))
        _add_xtcx(obj, asm.x0_vars, asm.outer.c_quad)

    if mode == "sufficient":
        # stage cost of the pinned first step
        Q, R = mpc.Q, mpc.R
        _add_xtcx(obj, asm.x0_vars, Q)
        for v, c in zip(asm.x0_vars, -2.0 * Q @ mpc.x_eq):
            if c != 0.0:
                obj.linear.add_term(v, float(c))
        obj.linear.constant += float(mpc.x_eq @ Q @ mpc.x_eq)
        _add_xtcx(obj, asm.u_vars, R)
        for v, c in zip(asm.u_vars, -2.0 * R @ mpc.u_eq):
            if c != 0.0:
                obj.linear.add_term(v, float(c))
        obj.linear.constant += float(mpc.u_eq @ R @ mpc.u_eq)

    # minus the inner optimal cost (overestimated => xi under-estimated)
    if ell is not None:
        obj.linear.add_term(ell, -1.0)
    else:
        H, g, c = inner_quad
        p_vars = asm.x0_vars + asm.u_vars
        _add_xtcx(obj, p_vars, -0.5 * H)
        for v, coef in zip(p_vars, g):
            if coef != 0.0:
                obj.linear.add_term(v, -float(coef))
        obj.linear.constant -= float(c)


def _xi_oracle(mpc: MpcSpec, outer: CondensedQp, inner: CondensedQp,
               psi2: Policy, x0: np.ndarray, mode: str) -> Optional[float]:
    """Re-evaluate xi at a witness with independent QP solves."""
    try:
        u = np.atleast_1d(psi2.forward(x0))
        p = np.concatenate([x0, u])
        oq, iq = outer.qp, inner.qp
        sol_o = solve_qp(oq.P, oq.Q @ x0 + oq.q,
                         A=oq.A if oq.n_eq else None,
                         b=oq.B @ x0 + oq.b if oq.n_eq else None,
                         F=oq.F if oq.n_ineq else None,
                         g=oq.G @ x0 + oq.g if oq.n_ineq else None)
        sol_i = solve_qp(iq.P, iq.Q @ p + iq.q,
                         A=iq.A if iq.n_eq else None,
                         b=iq.B @ p + iq.b if iq.n_eq else None,
                         F=iq.F if iq.n_ineq else None,
                         g=iq.G @ p + iq.g if iq.n_ineq else None)
    except (QpInfeasible, ValueError):
        return None
    xi = outer.objective(x0, sol_o.z) - inner.objective(p, sol_i.z)
    if mode == "sufficient":
        xi += mpc.stage_cost(x0, u)
    return float(xi)


def _check_equilibrium_output(mpc: MpcSpec, psi2: Policy) -> float:
    u = np.atleast_1d(psi2.forward(mpc.x_eq))
    return float(np.max(np.abs(u - mpc.u_eq)))


def _aux_config(cfg: SolveConfig) -> SolveConfig:
    return cfg.copy(
        node_limit=min(cfg.node_limit, 1000),
        time_limit=min(cfg.time_limit, 30.0),
        gap_tol=max(cfg.gap_tol, 1e-4),
    )


def _bound_via_milp(model: MipModel, expr: LinExpr, cfg: SolveConfig,
                    fallback: Tuple[float, float]):
    """Valid interval for a linear expression over the model's feasible set.

    Uses the solver bound of two capped MILP runs, so the interval is valid
    even when the runs stop early. Returns None when the model is infeasible.
    """
    saved = model.objective
    out = []
    try:
        for maximize, fb in ((False, fallback[0]), (True, fallback[1])):
            model.objective = QuadObjective(
                linear=expr.copy(),
                sense=ObjSense.MAX if maximize else ObjSense.MIN,
            )
            try:
                sol = solve_milp(model, cfg)
            except ValueError:
                # unbounded relaxation: fall back to interval arithmetic
                out.append(fb)
                continue
            if sol.status is MipStatus.INFEASIBLE:
                return None
            out.append(sol.bound if np.isfinite(sol.bound) else fb)
    finally:
        model.objective = saved
    return out[0], out[1]


def _interval_fallback(expr: LinExpr, model: MipModel) -> Tuple[float, float]:
    lo = hi = expr.constant
    for v, c in expr.terms.items():
        a, b = model.variables[v].lb, model.variables[v].ub
        lo += min(c * a, c * b)
        hi += max(c * a, c * b)
    return lo, hi


def _split_piece(p_lo: np.ndarray, p_hi: np.ndarray, scale: np.ndarray):
    """Bisect every dimension that is within a factor 2 of the widest."""
    widths = (p_hi - p_lo) / scale
    split = widths >= 0.5 * widths.max()
    pieces = [(p_lo.copy(), p_hi.copy())]
    for k in np.flatnonzero(split):
        mid = 0.5 * (p_lo[k] + p_hi[k])
        out = []
        for lo, hi in pieces:
            hi2 = hi.copy()
            hi2[k] = mid
            lo2 = lo.copy()
            lo2[k] = mid
            out.append((lo, hi2))
            out.append((lo2, hi))
        pieces = out
    return pieces


def _input_violation(asm: _Assembly, mpc: MpcSpec, cfg: SolveConfig):
    """Worst violation of the input constraints by the policy output."""
    aux_cfg = _aux_config(cfg)
    worst = -np.inf
    for c, d in zip(mpc.U.C, mpc.U.d):
        e = LinExpr(constant=-float(d))
        for v, coef in zip(asm.u_vars, c):
            if coef != 0.0:
                e.add_term(v, float(coef))
        iv = _bound_via_milp(asm.model, e, aux_cfg,
                             _interval_fallback(e, asm.model))
        if iv is None:
            return None
        worst = max(worst, iv[1])
    return worst


def _run_stability(
    mpc: MpcSpec,
    psi2: Policy,
    X0: Optional[Polytope],
    epsilon: Optional[float],
    config: Optional[SolveConfig],
    mode: str,
    tighten: bool,
) -> VerifyReport:
    cfg = config or default_config()
    eps = default_epsilon(mpc.Q) if epsilon is None else float(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    mpc.resolve()
    region = X0 if X0 is not None else default_x0_region(mpc)
    outer = condense_mpc(mpc)
    inner = build_inner_qp(mpc, eps, mode)
    n, m = mpc.system.n, mpc.system.m
    kind = "SufficientStability" if mode == "sufficient" else "DirectStability"
    diag = {"mode": mode, "epsilon": eps}

    x0_lo, x0_hi = region.bounding_box()
    x_lo_set, x_hi_set = mpc.X.bounding_box()
    x_lo = np.maximum(x0_lo, x_lo_set)
    x_hi = np.minimum(x0_hi, x_hi_set)
    if np.any(~np.isfinite(x_lo)) or np.any(~np.isfinite(x_hi)):
        raise EncodingError("initial-state region must be bounded")

    def report(status, value, bound, gap, witness, certified):
        return VerifyReport(kind=kind, status=status, value=value,
                            bound=bound, gap=gap, witness_x0=witness,
                            certified=bool(certified), diagnostics=diag)

    if np.any(x_lo > x_hi):
        diag["empty_domain"] = True
        return report("infeasible", np.inf, np.inf, 0.0, None, True)

    root = _assemble(mpc, psi2, region, outer, inner, mode, (x_lo, x_hi),
                     tighten=tighten)
    if root is None:
        diag["empty_domain"] = True
        return report("infeasible", np.inf, np.inf, 0.0, None, True)

    input_violation = None
    if mode == "direct":
        # the certificate additionally needs psi2(x0) inside the input set
        # over the whole feasible region; one MILP per facet of U
        input_violation = _input_violation(root, mpc, cfg)
        diag["input_violation"] = input_violation
        if input_violation is None:
            diag["empty_domain"] = True
            return report("infeasible", np.inf, np.inf, 0.0, None, True)

    param_poly = _param_polytope(mpc, mode)
    # a piece only needs its bound pushed past the certification threshold
    piece_cfg = cfg.copy(node_limit=min(cfg.node_limit, PIECE_NODE_LIMIT),
                         bound_target=-0.5 * CERT_TOL)
    p0_lo = np.concatenate([x_lo, root.u_box[0]])
    p0_hi = np.concatenate([x_hi, root.u_box[1]])
    scale = np.maximum(p0_hi - p0_lo, 1.0)

    queue = [(p0_lo, p0_hi)]
    pieces = 0
    vacuous = 0
    exact_pieces = 0
    closed_form = 0
    bound_total = np.inf
    value_best = np.inf
    witness = None
    gap_best = 0.0
    failed = False
    exhausted = False

    while queue:
        p_lo, p_hi = queue.pop(0)
        pieces += 1
        x_box = (p_lo[:n], p_hi[:n])
        ub = _piece_u_box(mpc, psi2, mode, x_box, (p_lo[n:], p_hi[n:]))
        if ub is None:
            if _TRACE:
                print(f"piece {pieces} box={np.round(p_lo,3)}..{np.round(p_hi,3)} empty", flush=True)
            vacuous += 1
            continue
        q_lo = np.concatenate([x_box[0], ub[0]])
        q_hi = np.concatenate([x_box[1], ub[1]])
        # anchor the active-set guesses on the policy graph at the center
        x_mid = 0.5 * (x_box[0] + x_box[1])
        try:
            u_mid = np.atleast_1d(psi2.forward(x_mid)).astype(float)
            anchor = np.concatenate([x_mid, u_mid])
        except Exception:
            anchor = None
        inner_quad = _region_inner(inner, q_lo, q_hi, anchor=anchor)
        outer_quad = _region_lower(outer, x_box[0], x_box[1], anchor=x_mid)
        if inner_quad is not None and outer_quad is not None:
            # both values have parameter quadratics valid over the whole
            # box; if their interval minimum already clears the threshold,
            # the piece certifies without touching the policy graph
            Hq, gq, cq = _xi_quadratic(mode, mpc, n, m, outer_quad, inner_quad)
            box_min = _quad_box_min(Hq, gq, cq, q_lo, q_hi)
            if box_min >= -CERT_TOL:
                if _TRACE:
                    print(f"piece {pieces} box={np.round(p_lo,3)}..{np.round(p_hi,3)} "
                          f"closed bound={box_min:.3e}", flush=True)
                closed_form += 1
                bound_total = min(bound_total, box_min)
                continue
        asm = _assemble(mpc, psi2, region, outer, inner, mode,
                        x_box, (p_lo[n:], p_hi[n:]), tighten=tighten,
                        param_poly=param_poly if outer_quad is not None else None)
        if asm is None:
            vacuous += 1
            continue
        if inner_quad is not None:
            # the inner value admits a tight quadratic overestimate here;
            # spatial branching inside the solver refines the certificate
            # without further piece splitting
            _install_objective(asm, mode, mpc, inner_quad=inner_quad,
                               outer_quad=outer_quad)
            exact_pieces += 1
        else:
            verts = _slice_vertices(param_poly, q_lo, q_hi)
            if verts is None:
                # no feasible parameter in the piece; confirm on the model
                # so a wrong recursion cannot silently skip domain
                asm.model.objective = QuadObjective()
                probe = solve_milp(asm.model, _aux_config(piece_cfg))
                if probe.status is not MipStatus.INFEASIBLE:
                    raise EncodingError(
                        "feasible parameters found outside the derived "
                        "parameter polytope")
                vacuous += 1
                continue
            ell = _interpolate_inner_value(asm.model, inner,
                                           asm.x0_vars + asm.u_vars, verts)
            _install_objective(asm, mode, mpc, ell=ell, outer_quad=outer_quad)
        sol = solve_miqp(asm.model, piece_cfg)
        if _TRACE:
            print(f"piece {pieces} box={np.round(p_lo,3)}..{np.round(p_hi,3)} "
                  f"{'exact' if inner_quad is not None else 'interp'}"
                  f"{'-lite' if outer_quad is not None else ''} "
                  f"{sol.status.value} bound={sol.bound:.3e} nodes={sol.nodes} "
                  f"t={sol.wall_time:.2f}", flush=True)
        if sol.status is MipStatus.INFEASIBLE:
            vacuous += 1
            continue
        oracle = None
        if sol.incumbent is not None:
            x_wit = np.array([sol.incumbent[v] for v in asm.x0_vars])
            oracle = _xi_oracle(mpc, outer, inner, psi2, x_wit, mode)
            if oracle is not None and oracle < value_best:
                value_best = oracle
                witness = x_wit
                gap_best = abs(oracle - sol.bound) / max(1.0, abs(oracle))
        if sol.bound >= -CERT_TOL:
            bound_total = min(bound_total, sol.bound)
            continue
        if oracle is not None and oracle < -CERT_TOL:
            # genuine counterexample, no point in refining further
            bound_total = min(bound_total, sol.bound)
            value_best = min(value_best, oracle)
            witness = x_wit
            failed = True
            break
        widths = (p_hi - p_lo) / scale
        if pieces + len(queue) < MAX_PIECES and np.max(widths) > MIN_WIDTH_FRAC:
            queue.extend(_split_piece(p_lo, p_hi, scale))
        else:
            bound_total = min(bound_total, sol.bound)
            exhausted = True

    diag.update({"pieces": pieces, "vacuous_pieces": vacuous,
                 "exact_pieces": exact_pieces,
                 "closed_form_pieces": closed_form})
    if pieces == vacuous:
        diag["empty_domain"] = True
        return report("infeasible", np.inf, np.inf, 0.0, None, True)

    certified = (not failed) and (not exhausted) and bound_total >= -CERT_TOL
    if mode == "direct" and input_violation is not None:
        certified = certified and input_violation <= cfg.feas_tol
    if failed:
        status = "optimal"
    elif exhausted:
        status = MipStatus.NODE_LIMIT.value
    else:
        status = "optimal"
    if not np.isfinite(value_best):
        value_best = bound_total
        gap_best = 0.0
    return report(status, value_best, bound_total, gap_best, witness, certified)


def verify_sufficient(
    mpc: MpcSpec,
    psi2: Policy,
    X0: Optional[Polytope] = None,
    epsilon: Optional[float] = None,
    config: Optional[SolveConfig] = None,
    tighten: bool = False,
) -> VerifyReport:
    """Certify that the MPC cost is a Lyapunov function under the policy.

    Requires the policy to reproduce the equilibrium input at x_eq, so the
    equilibrium is a fixed point of the approximate closed loop.
    """
    mpc.resolve()
    dev = _check_equilibrium_output(mpc, psi2)
    if dev > ORIGIN_TOL:
        raise Psi2NotZeroAtOrigin(
            f"policy output deviates from u_eq by {dev:.3e} at x_eq")
    return _run_stability(mpc, psi2, X0, epsilon, config, "sufficient", tighten)


def verify_direct(
    mpc: MpcSpec,
    psi2: Policy,
    X0: Optional[Polytope] = None,
    epsilon: Optional[float] = None,
    config: Optional[SolveConfig] = None,
    tighten: bool = False,
) -> VerifyReport:
    """Certify the cost decrease along the approximate closed loop directly.

    No terminal-set assumption; certification additionally requires the
    policy output to respect the input constraints over the whole region.
    """
    mpc.resolve()
    dev = _check_equilibrium_output(mpc, psi2)
    if dev > ORIGIN_TOL:
        warnings.warn(
            f"policy output deviates from u_eq by {dev:.3e} at x_eq; "
            "the equilibrium may not be a fixed point", stacklevel=2)
    return _run_stability(mpc, psi2, X0, epsilon, config, "direct", tighten)


@dataclass
class StableRegionSpec:
    """Polyhedral outer approximation {x | C_stable x <= c_star}."""

    C_stable: np.ndarray
    c_star: np.ndarray
    empty: bool = False
    reports: List[VerifyReport] = field(default_factory=list)

    def region(self) -> Polytope:
        return Polytope(self.C_stable, self.c_star)


def stable_region(
    mpc: MpcSpec,
    psi2: Policy,
    X0: Optional[Polytope] = None,
    C_stable: Optional[np.ndarray] = None,
    epsilon: Optional[float] = None,
    config: Optional[SolveConfig] = None,
    tighten: bool = False,
) -> StableRegionSpec:
    """Outer approximation of the region where the direct certificate's
    constraint system is feasible: one MILP per row of C_stable.

    Row values use the solver's upper bound, keeping the region an outer
    approximation even when a run stops at a limit.
    """
    cfg = config or default_config()
    eps = default_epsilon(mpc.Q) if epsilon is None else float(epsilon)
    mpc.resolve()
    n = mpc.system.n
    if C_stable is None:
        C_stable = np.vstack([np.eye(n), -np.eye(n)])
    C_stable = np.atleast_2d(np.asarray(C_stable, dtype=float))
    norms = np.max(np.abs(C_stable), axis=1)
    if np.any(norms <= 0):
        raise ValueError("C_stable rows must be non-zero")
    C_stable = C_stable / norms[:, None]

    region = X0 if X0 is not None else default_x0_region(mpc)
    outer = condense_mpc(mpc)
    inner = build_inner_qp(mpc, eps, "direct")
    x0_lo, x0_hi = region.bounding_box()
    x_lo_set, x_hi_set = mpc.X.bounding_box()
    x_lo = np.maximum(x0_lo, x_lo_set)
    x_hi = np.minimum(x0_hi, x_hi_set)
    asm = None
    if np.all(x_lo <= x_hi):
        asm = _assemble(mpc, psi2, region, outer, inner, "direct",
                        (x_lo, x_hi), tighten=tighten)

    c_star = np.empty(C_stable.shape[0])
    reports: List[VerifyReport] = []
    empty = asm is None
    if not empty:
        for i, row in enumerate(C_stable):
            e = LinExpr()
            for v, coef in zip(asm.x0_vars, row):
                if coef != 0.0:
                    e.add_term(v, float(coef))
            asm.model.objective = QuadObjective(linear=e, sense=ObjSense.MAX)
            sol = solve_milp(asm.model, cfg)
            diag = solver_diagnostics(sol, cfg, asm.model)
            witness = None
            if sol.incumbent is not None:
                witness = np.array([sol.incumbent[v] for v in asm.x0_vars])
            reports.append(VerifyReport(
                kind="StableRegion", status=sol.status.value,
                value=sol.objective, bound=sol.bound, gap=sol.gap,
                witness_x0=witness,
                certified=sol.status is MipStatus.OPTIMAL,
                diagnostics=diag,
            ))
            if sol.status is MipStatus.INFEASIBLE:
                empty = True
                break
            c_star[i] = sol.bound
    if empty:
        warnings.warn("region row infeasible; stable region is empty",
                      RowInfeasible, stacklevel=2)
        c_star = np.full(C_stable.shape[0], -np.inf)
    return StableRegionSpec(C_stable, c_star, empty, reports)
