"""KKT-based mixed-integer encoding of parametric quadratic programs.

A strictly convex QP with affine parameter dependence,

    min_z  0.5 z'Pz + (Qx + q)'z
    s.t.   Az = Bx + b,  Fz <= Gx + g,

has a unique solution map x -> z*(x). Its graph is encoded through the KKT
system with big-M linearized complementarity. The big-M constants come from
auxiliary LPs over the KKT relaxation polytope with x ranging in its box.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from ..mip.model import LinExpr, MipModel, Sense, VarKind
from ..solver.lp import ExprOptimizer, LpStatus, minimize_expr
from .blocks import EncodingError, GraphBlock

DEFAULT_BIGM_FALLBACK = 1e5
ACTIVE_SET_TOL = 1e-9


class NotPositiveDefinite(EncodingError):
    pass


def _exclusive_pairs(qp: "ParametricQp") -> List[tuple]:
    """Row pairs that can never be tight simultaneously.

    Antiparallel rows i, j (F_i = -c F_j, G_i = -c G_j, c > 0) with
    g_i + c g_j > 0 describe the two sides of a nondegenerate slab; both
    tight would force 0 = g_i + c g_j. At most one multiplier is active.
    """
    m = qp.n_ineq
    pairs = []
    norms = np.linalg.norm(np.hstack([qp.F, qp.G]), axis=1)
    for i in range(m):
        if norms[i] <= 0:
            continue
        for j in range(i + 1, m):
            if norms[j] <= 0:
                continue
            c = norms[i] / norms[j]
            if (np.allclose(qp.F[i], -c * qp.F[j], atol=1e-12)
                    and np.allclose(qp.G[i], -c * qp.G[j], atol=1e-12)
                    and qp.g[i] + c * qp.g[j] > 1e-9):
                pairs.append((i, j))
    return pairs


def _support_budget(qp: "ParametricQp") -> int:
    """Largest multiplier support the encoding ever needs.

    Projecting stationarity onto the null space of A' leaves
    n_z - rank(A) effective equations on lambda, so a basic feasible
    multiplier with at most that many positive entries exists for every
    parameter. Degenerate vertices admit larger multipliers, but never
    require them, and capping the support keeps the multiplier set bounded.
    """
    if qp.n_eq == 0:
        return qp.n_z
    return qp.n_z - int(np.linalg.matrix_rank(qp.A))


def _cholesky_check(P: np.ndarray, pivot_tol: float = 1e-10) -> None:
    """Plain Cholesky loop; raises when any pivot drops below the tolerance."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if not np.allclose(P, P.T, atol=1e-9):
        raise NotPositiveDefinite("matrix is not symmetric")
    L = np.zeros_like(P)
    for j in range(n):
        pivot = P[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= pivot_tol:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at index {j}")
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (P[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]


@dataclass
class ParametricQp:
    """min 0.5 z'Pz + (Qx+q)'z  s.t.  Az = Bx + b, Fz <= Gx + g."""

    P: np.ndarray
    Q: np.ndarray
    q: np.ndarray
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n_z = self.P.shape[0]
        self.Q = np.asarray(self.Q, dtype=float).reshape(n_z, -1)
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        n_x = self.Q.shape[1]
        if self.A is None:
            self.A = np.zeros((0, n_z))
            self.B = np.zeros((0, n_x))
            self.b = np.zeros(0)
        else:
            self.A = np.asarray(self.A, dtype=float).reshape(-1, n_z)
            self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], n_x)
            self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.F is None:
            self.F = np.zeros((0, n_z))
            self.G = np.zeros((0, n_x))
            self.g = np.zeros(0)
        else:
            self.F = np.asarray(self.F, dtype=float).reshape(-1, n_z)
            self.G = np.asarray(self.G, dtype=float).reshape(self.F.shape[0], n_x)
            self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        if self.q.size != n_z or self.b.size != self.A.shape[0] or self.g.size != self.F.shape[0]:
            raise ValueError("vector dimensions inconsistent")
        _cholesky_check(self.P)

    @property
    def n_z(self) -> int:
        return self.P.shape[0]

    @property
    def n_x(self) -> int:
        return self.Q.shape[1]

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.F.shape[0]


@dataclass
class BigMBounds:
    """Constants for the complementarity linearization plus variable boxes.

    ``never_active[i]`` means lambda_i = 0 over the whole parameter box, so
    the binary can be dropped; ``always_active[i]`` means the constraint
    holds with equality everywhere and the binary is fixed to one.
    """

    M_slack: np.ndarray
    M_dual: np.ndarray
    slack_fallback: np.ndarray
    dual_fallback: np.ndarray
    never_active: np.ndarray
    always_active: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    mu_lower: np.ndarray
    mu_upper: np.ndarray
    aux_fallback: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    fallback_value: float = DEFAULT_BIGM_FALLBACK
    refined: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def any_fallback(self) -> bool:
        return bool(
            self.slack_fallback.any()
            or self.dual_fallback.any()
            or self.aux_fallback.any()
        )

    def scaled(self, factor: float) -> "BigMBounds":
        return BigMBounds(
            self.M_slack * factor,
            self.M_dual * factor,
            self.slack_fallback,
            self.dual_fallback,
            self.never_active,
            self.always_active,
            self.z_lower,
            self.z_upper,
            self.mu_lower,
            self.mu_upper,
            self.aux_fallback,
            self.fallback_value,
            self.refined,
        )


def _kkt_relaxation_model(qp: ParametricQp, input_box, z_box=None, coupling=None):
    """LP model over (x, z, mu, lambda) containing every KKT point.

    ``z_box`` bounds the primal decision directly; ``coupling`` is a triple
    (D, lo, hi) adding lo <= Dz <= hi. Either one is needed whenever the
    primal constraints alone leave the relaxation unbounded. Both must hold
    at the true solution z*(x) for every x in the box, which is the caller's
    guarantee.
    """
    lo = np.atleast_1d(np.asarray(input_box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(input_box[1], dtype=float))
    if lo.size != qp.n_x or np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
        raise ValueError("parameter box must be finite with matching dimension")
    model = MipModel("kkt-relaxation")
    xs = [model.add_variable(lb=float(l), ub=float(h)) for l, h in zip(lo, hi)]
    if z_box is not None:
        zlo = np.atleast_1d(np.asarray(z_box[0], dtype=float))
        zhi = np.atleast_1d(np.asarray(z_box[1], dtype=float))
        zs = [model.add_variable(lb=float(l), ub=float(h)) for l, h in zip(zlo, zhi)]
    else:
        zs = model.add_variables(qp.n_z)
    mus = model.add_variables(qp.n_eq)
    lams = model.add_variables(qp.n_ineq, lb=0.0)

    def row(coeffs_z, coeffs_x, const=0.0, mu_c=None, lam_c=None):
        e = LinExpr(constant=const)
        for v, c in zip(zs, coeffs_z):
            if c != 0.0:
                e.add_term(v, float(c))
        for v, c in zip(xs, coeffs_x):
            if c != 0.0:
                e.add_term(v, float(c))
        if mu_c is not None:
            for v, c in zip(mus, mu_c):
                if c != 0.0:
                    e.add_term(v, float(c))
        if lam_c is not None:
            for v, c in zip(lams, lam_c):
                if c != 0.0:
                    e.add_term(v, float(c))
        return e

    for i in range(qp.n_eq):
        model.add_linear(row(qp.A[i], -qp.B[i]), Sense.EQ, float(qp.b[i]))
    for i in range(qp.n_ineq):
        model.add_linear(row(qp.F[i], -qp.G[i]), Sense.LE, float(qp.g[i]))
    for k in range(qp.n_z):
        e = row(qp.P[k], qp.Q[k], mu_c=qp.A[:, k], lam_c=qp.F[:, k])
        model.add_linear(e, Sense.EQ, -float(qp.q[k]))
    if coupling is not None:
        D, clo, chi = coupling
        D = np.atleast_2d(np.asarray(D, dtype=float))
        for drow, l, h in zip(D, np.atleast_1d(clo), np.atleast_1d(chi)):
            e = LinExpr()
            for v, c in zip(zs, drow):
                if c != 0.0:
                    e.add_term(v, float(c))
            model.add_linear(e, Sense.LE, float(h))
            model.add_linear(e.copy(), Sense.GE, float(l))
    return model, xs, zs, mus, lams


def compute_bigM_bounds(
    qp: ParametricQp,
    input_box,
    timeout: float = math.inf,
    fallback: float = DEFAULT_BIGM_FALLBACK,
    z_box=None,
    coupling=None,
    refine: bool = False,
    refine_timeout: float = 5.0,
    refine_node_limit: int = 400,
) -> BigMBounds:
    """Auxiliary LPs for the complementarity constants and variable boxes.

    Each constant is the optimum of an LP over the KKT relaxation polytope
    with the parameter ranging over its box. Unbounded instances, LP
    failures, and everything past ``timeout`` seconds use ``fallback`` and
    are flagged. ``z_box``/``coupling`` confine the primal decision when the
    constraints alone do not; see ``_kkt_relaxation_model``.

    With ``refine`` the flagged constants get a second pass: the bound
    problems are re-solved as MILPs with complementarity rows (using the
    fallback constants), interrupted after ``refine_timeout`` seconds or
    ``refine_node_limit`` nodes, and the best relaxation bound is kept.
    """
    model, xs, zs, mus, lams = _kkt_relaxation_model(qp, input_box, z_box, coupling)
    deadline = time.monotonic() + timeout
    m = qp.n_ineq

    # A row whose normal lies in the row space of the equalities never needs
    # multiplier mass: any lambda_i on it can be moved onto mu without
    # changing stationarity, so an optimal multiplier with lambda_i = 0
    # always exists. Pinning these avoids genuinely unbounded multiplier
    # rays (e.g. box rows on equality-determined coordinates).
    absorbable = np.zeros(m, dtype=bool)
    if qp.n_eq and m:
        W, *_ = np.linalg.lstsq(qp.A.T, qp.F.T, rcond=None)
        resid = np.linalg.norm(qp.A.T @ W - qp.F.T, axis=0)
        absorbable = resid <= 1e-9 * np.maximum(1.0, np.linalg.norm(qp.F, axis=1))
    # a row that duplicates an earlier one (same half-space up to positive
    # scaling) can hand its multiplier mass to the first copy
    if m:
        rows = np.hstack([qp.F, qp.G, qp.g[:, None]])
        norms = np.linalg.norm(rows, axis=1)
        for i in range(m):
            if absorbable[i] or norms[i] <= 0:
                continue
            for j in range(i + 1, m):
                if absorbable[j] or norms[j] <= 0:
                    continue
                if np.allclose(rows[j] * norms[i], rows[i] * norms[j],
                               atol=1e-12):
                    absorbable[j] = True
    for i in np.where(absorbable)[0]:
        model.set_bounds(lams[i], 0.0, 0.0)

    # one compiled relaxation shared by every bound LP; only the cost
    # vector changes between solves
    try:
        opt = ExprOptimizer(model)
    except Exception:
        opt = None

    def timed_opt(expr, maximize):
        if opt is None or time.monotonic() > deadline:
            return None
        try:
            r = opt.minimize(expr, maximize=maximize)
        except Exception:
            return None
        if r.status is LpStatus.OPTIMAL:
            return r.objective
        return None

    M_slack = np.full(m, fallback)
    M_dual = np.full(m, fallback)
    slack_fb = np.ones(m, dtype=bool)
    dual_fb = np.ones(m, dtype=bool)
    min_slack = np.zeros(m)
    for i in range(m):
        if absorbable[i]:
            M_dual[i] = 0.0
            M_slack[i] = 0.0
            dual_fb[i] = slack_fb[i] = False
            continue
        slack = LinExpr(constant=float(qp.g[i]))
        for v, c in zip(xs, qp.G[i]):
            if c != 0.0:
                slack.add_term(v, float(c))
        for v, c in zip(zs, qp.F[i]):
            if c != 0.0:
                slack.add_term(v, -float(c))
        hi = timed_opt(slack, maximize=True)
        if hi is not None:
            M_slack[i] = max(hi, 0.0)
            slack_fb[i] = False
        lo = timed_opt(slack, maximize=False)
        min_slack[i] = lo if lo is not None else 0.0
        lam_hi = timed_opt(LinExpr({lams[i]: 1.0}), maximize=True)
        if lam_hi is not None:
            M_dual[i] = max(lam_hi, 0.0)
            dual_fb[i] = False
    # positive slack everywhere forces lambda = 0 by complementarity; a
    # slack that can never be positive means the constraint is always tight.
    never = ((~dual_fb) & (M_dual <= ACTIVE_SET_TOL)) | (min_slack > ACTIVE_SET_TOL)
    always = (~slack_fb) & (M_slack <= ACTIVE_SET_TOL) & (~absorbable)
    M_dual = np.where(never, 0.0, M_dual)
    dual_fb &= ~never

    z_lo = np.full(qp.n_z, -fallback)
    z_hi = np.full(qp.n_z, fallback)
    mu_lo = np.full(qp.n_eq, -fallback)
    mu_hi = np.full(qp.n_eq, fallback)
    aux_fb = np.zeros(qp.n_z + qp.n_eq, dtype=bool)
    for k, v in enumerate(zs):
        lo = timed_opt(LinExpr({v: 1.0}), maximize=False)
        hi = timed_opt(LinExpr({v: 1.0}), maximize=True)
        if lo is None or hi is None:
            aux_fb[k] = True
        else:
            z_lo[k], z_hi[k] = lo, hi
    for k, v in enumerate(mus):
        lo = timed_opt(LinExpr({v: 1.0}), maximize=False)
        hi = timed_opt(LinExpr({v: 1.0}), maximize=True)
        if lo is None or hi is None:
            aux_fb[qp.n_z + k] = True
        else:
            mu_lo[k], mu_hi[k] = lo, hi

    refined = np.zeros(m, dtype=bool)
    large = 1e-2 * fallback
    needs_refine = (dual_fb.any() or slack_fb.any() or aux_fb.any()
                    or float(M_dual.max(initial=0.0)) > large
                    or float(np.max(np.abs(np.concatenate([mu_lo, mu_hi])),
                                    initial=0.0)) > large)
    if refine and needs_refine:
        from ..solver.branch_bound import MipStatus, solve_milp
        from ..solver.config import SolveConfig
        from ..mip.model import QuadObjective, ObjSense

        pad = lambda v: 1e-6 + 1e-9 * abs(v)
        budget = _support_budget(qp)
        pairs = _exclusive_pairs(qp)
        cfg = SolveConfig(node_limit=refine_node_limit,
                          time_limit=refine_timeout, gap_tol=1e-4)

        def build_refine_model():
            """Exact KKT set as a MILP, using the bounds found so far.

            Complementarity uses big-M rows; the support-budget and slab
            cuts restrict the branching to basic multipliers, which is
            where the degenerate rays die. Any interrupted bound solve
            still yields a valid relaxation bound.
            """
            mdl, xs3, zs3, mus3, lams3 = _kkt_relaxation_model(
                qp, input_box, z_box, coupling)
            beta_of = {}
            for i in range(m):
                if never[i]:
                    mdl.set_bounds(lams3[i], 0.0, 0.0)
                    continue
                mdl.set_bounds(lams3[i], 0.0, float(M_dual[i]))
                beta = mdl.add_variable(VarKind.BINARY)
                beta_of[i] = beta
                mdl.add_linear(
                    LinExpr({lams3[i]: 1.0, beta: -float(M_dual[i])}),
                    Sense.LE, 0.0)
                e = LinExpr(constant=float(qp.g[i]))
                for v, c in zip(xs3, qp.G[i]):
                    if c != 0.0:
                        e.add_term(v, float(c))
                for v, c in zip(zs3, qp.F[i]):
                    if c != 0.0:
                        e.add_term(v, -float(c))
                e.add_term(beta, float(M_slack[i]))
                mdl.add_linear(e, Sense.LE, float(M_slack[i]))
            for k in range(qp.n_eq):
                if not aux_fb[qp.n_z + k]:
                    mdl.set_bounds(mus3[k], float(mu_lo[k]), float(mu_hi[k]))
            for k in range(qp.n_z):
                if not aux_fb[k]:
                    mdl.set_bounds(zs3[k], float(z_lo[k]), float(z_hi[k]))
            if len(beta_of) > budget:
                mdl.add_linear(
                    LinExpr({b: 1.0 for b in beta_of.values()}),
                    Sense.LE, float(budget))
            for i, j in pairs:
                if i in beta_of and j in beta_of:
                    mdl.add_linear(
                        LinExpr({beta_of[i]: 1.0, beta_of[j]: 1.0}),
                        Sense.LE, 1.0)
            return mdl, xs3, zs3, mus3, lams3

        for _outer in range(6):
            model, xs, zs, mus, lams = build_refine_model()

            def milp_bound(expr, maximize):
                model.objective = QuadObjective(
                    linear=expr.copy(),
                    sense=ObjSense.MAX if maximize else ObjSense.MIN)
                try:
                    sol = solve_milp(model, cfg)
                except Exception:
                    return None
                if sol.status is MipStatus.INFEASIBLE or \
                        not np.isfinite(sol.bound):
                    return None
                return float(sol.bound)

            # revisit every cap that is still large, not only the flagged
            # ones: pass-one values inflated by degenerate rays block the
            # stationarity chain for everything upstream of them, and each
            # round restarts the rays from the tightened caps
            progress = False
            for i in range(m):
                if dual_fb[i] or (not never[i] and M_dual[i] > large):
                    b = milp_bound(LinExpr({lams[i]: 1.0}), maximize=True)
                    if b is not None and b < min(fallback, 0.95 * M_dual[i]):
                        M_dual[i] = max(b + pad(b), 0.0)
                        dual_fb[i] = False
                        refined[i] = True
                        progress = True
                        model.set_bounds(lams[i], 0.0, float(M_dual[i]))
                if slack_fb[i]:
                    e = LinExpr(constant=float(qp.g[i]))
                    for v, c in zip(xs, qp.G[i]):
                        if c != 0.0:
                            e.add_term(v, float(c))
                    for v, c in zip(zs, qp.F[i]):
                        if c != 0.0:
                            e.add_term(v, -float(c))
                    b = milp_bound(e, maximize=True)
                    if b is not None and b < fallback:
                        M_slack[i] = max(b + pad(b), 0.0)
                        slack_fb[i] = False
                        refined[i] = True
                        progress = True
            for k, v in enumerate(mus):
                cur = max(abs(mu_lo[k]), abs(mu_hi[k]))
                if not aux_fb[qp.n_z + k] and cur <= large:
                    continue
                lo = milp_bound(LinExpr({v: 1.0}), maximize=False)
                hi = milp_bound(LinExpr({v: 1.0}), maximize=True)
                if lo is not None and hi is not None and \
                        max(abs(lo), abs(hi)) < min(fallback, 0.95 * cur):
                    mu_lo[k] = max(lo - pad(lo), -fallback)
                    mu_hi[k] = min(hi + pad(hi), fallback)
                    aux_fb[qp.n_z + k] = False
                    progress = True
                    model.set_bounds(v, float(mu_lo[k]), float(mu_hi[k]))

            # refined duals that vanish everywhere allow extra pruning
            newly_never = refined & (~never) & (M_dual <= ACTIVE_SET_TOL)
            never |= newly_never
            M_dual = np.where(never, 0.0, M_dual)
            dual_fb &= ~never

            # LP polish rounds: installing the bounds found so far as
            # variable bounds lets the stationarity rows cap the remaining
            # multipliers without any integrality
            for _ in range(3):
                m2, xs2, zs2, mus2, lams2 = _kkt_relaxation_model(
                    qp, input_box, z_box, coupling)
                for i in range(m):
                    m2.set_bounds(lams2[i], 0.0, float(M_dual[i]))
                for k in range(qp.n_eq):
                    if not aux_fb[qp.n_z + k]:
                        m2.set_bounds(mus2[k], float(mu_lo[k]), float(mu_hi[k]))
                for k in range(qp.n_z):
                    if not aux_fb[k]:
                        m2.set_bounds(zs2[k], float(z_lo[k]), float(z_hi[k]))

                try:
                    opt2 = ExprOptimizer(m2)
                except Exception:
                    opt2 = None

                def lp_opt(expr, maximize):
                    if opt2 is None:
                        return None
                    try:
                        r = opt2.minimize(expr, maximize=maximize)
                    except Exception:
                        return None
                    return r.objective if r.status is LpStatus.OPTIMAL else None

                improved = False
                for i in range(m):
                    if never[i] or (not dual_fb[i] and M_dual[i] <= large):
                        continue
                    b = lp_opt(LinExpr({lams2[i]: 1.0}), maximize=True)
                    if b is not None and b < 0.99 * M_dual[i]:
                        M_dual[i] = max(b + pad(b), 0.0)
                        dual_fb[i] = False
                        refined[i] = True
                        improved = True
                for k, v in enumerate(mus2):
                    cur = max(abs(mu_lo[k]), abs(mu_hi[k]))
                    if not aux_fb[qp.n_z + k] and cur <= large:
                        continue
                    lo = lp_opt(LinExpr({v: 1.0}), maximize=False)
                    hi = lp_opt(LinExpr({v: 1.0}), maximize=True)
                    if lo is not None and hi is not None and \
                            max(abs(lo), abs(hi)) < 0.99 * cur:
                        mu_lo[k] = lo - pad(lo)
                        mu_hi[k] = hi + pad(hi)
                        aux_fb[qp.n_z + k] = False
                        improved = True
                if improved:
                    progress = True
                else:
                    break
            newly_never = refined & (~never) & (M_dual <= ACTIVE_SET_TOL)
            never |= newly_never
            M_dual = np.where(never, 0.0, M_dual)
            dual_fb &= ~never
            if not progress:
                break

    return BigMBounds(
        M_slack, M_dual, slack_fb, dual_fb, never, always,
        z_lo, z_hi, mu_lo, mu_hi, aux_fb, fallback, refined,
    )


@dataclass
class KktBlock(GraphBlock):
    """GraphBlock plus handles into the KKT variables."""

    z_vars: List[int] = field(default_factory=list)
    mu_vars: List[int] = field(default_factory=list)
    lam_vars: List[int] = field(default_factory=list)
    beta_vars: List[Optional[int]] = field(default_factory=list)


def encode_parametric_qp_kkt(
    model: MipModel,
    qp: ParametricQp,
    input_vars: Sequence[int],
    bigM: BigMBounds,
    output_map: Union[np.ndarray, Sequence[int], None] = None,
) -> KktBlock:
    """Append the KKT system of the QP with big-M complementarity.

    ``output_map`` selects what the block exposes: a coordinate index list or
    a dense matrix applied to z. ``None`` exposes z itself. Constraints whose
    multiplier is provably zero lose their binary; constraints that are
    provably tight are pinned active.
    """
    xs = list(input_vars)
    if len(xs) != qp.n_x:
        raise EncodingError("parameter variable count mismatch")
    if not (np.all(np.isfinite(bigM.M_slack)) and np.all(np.isfinite(bigM.M_dual))):
        raise EncodingError("big-M constants must be finite")

    zs = [model.add_variable(lb=float(l), ub=float(h))
          for l, h in zip(bigM.z_lower, bigM.z_upper)]
    mus = [model.add_variable(lb=float(l), ub=float(h))
           for l, h in zip(bigM.mu_lower, bigM.mu_upper)]
    lams: List[int] = []
    betas: List[Optional[int]] = []

    def lin(pairs, const=0.0) -> LinExpr:
        e = LinExpr(constant=const)
        for v, c in pairs:
            if c != 0.0:
                e.add_term(v, float(c))
        return e

    for i in range(qp.n_eq):
        e = lin(list(zip(zs, qp.A[i])) + list(zip(xs, -qp.B[i])))
        model.add_linear(e, Sense.EQ, float(qp.b[i]), "kkt-eq")

    for i in range(qp.n_ineq):
        if bigM.never_active[i]:
            lam = model.add_variable(lb=0.0, ub=0.0)
            beta = None
        elif bigM.always_active[i]:
            lam = model.add_variable(lb=0.0, ub=float(bigM.M_dual[i]))
            beta = None
        else:
            lam = model.add_variable(lb=0.0, ub=float(bigM.M_dual[i]))
            beta = model.add_variable(VarKind.BINARY)
        lams.append(lam)
        betas.append(beta)

    for k in range(qp.n_z):
        e = lin(
            list(zip(zs, qp.P[k]))
            + list(zip(xs, qp.Q[k]))
            + list(zip(mus, qp.A[:, k]))
            + list(zip(lams, qp.F[:, k]))
        )
        model.add_linear(e, Sense.EQ, -float(qp.q[k]), "kkt-stat")

    for i in range(qp.n_ineq):
        slack_terms = list(zip(xs, qp.G[i])) + list(zip(zs, -qp.F[i]))
        if bigM.always_active[i]:
            model.add_linear(lin(slack_terms), Sense.EQ, -float(qp.g[i]), "kkt-tight")
            continue
        # primal feasibility: slack >= 0
        model.add_linear(lin(slack_terms), Sense.GE, -float(qp.g[i]), "kkt-feas")
        if bigM.never_active[i]:
            continue
        beta = betas[i]
        # lambda_i <= M_dual beta
        model.add_linear(
            lin([(lams[i], 1.0), (beta, -float(bigM.M_dual[i]))]), Sense.LE, 0.0,
            "kkt-comp-dual")
        # slack_i <= M_slack (1 - beta)
        e = lin(slack_terms + [(beta, float(bigM.M_slack[i]))])
        model.add_linear(e, Sense.LE, float(bigM.M_slack[i]) - float(qp.g[i]),
                         "kkt-comp-slack")

    # a basic multiplier never needs more active binaries than the support
    # budget; the cut removes unbounded multiplier rays at degenerate
    # vertices without touching the (x, z) projection
    free_betas = [b for b in betas if b is not None]
    budget = _support_budget(qp)
    if len(free_betas) > budget:
        model.add_linear(LinExpr({b: 1.0 for b in free_betas}),
                         Sense.LE, float(budget), "kkt-support")
    for i, j in _exclusive_pairs(qp):
        if betas[i] is not None and betas[j] is not None:
            model.add_linear(LinExpr({betas[i]: 1.0, betas[j]: 1.0}),
                             Sense.LE, 1.0, "kkt-slab")

    internals = list(mus) + list(lams) + [b for b in betas if b is not None]
    if output_map is None:
        outputs = list(zs)
    elif isinstance(output_map, np.ndarray) and output_map.ndim == 2:
        outputs = []
        for row in output_map:
            u = model.add_variable()
            e = lin([(u, -1.0)] + list(zip(zs, row)))
            model.add_linear(e, Sense.EQ, 0.0, "kkt-out")
            outputs.append(u)
        internals = list(zs) + internals
    else:
        idx = [int(i) for i in np.asarray(output_map).ravel()]
        outputs = [zs[i] for i in idx]
        internals = [z for z in zs if z not in set(outputs)] + internals

    block = KktBlock(xs, outputs, internals,
                     z_vars=list(zs), mu_vars=list(mus),
                     lam_vars=list(lams), beta_vars=betas)
    block.check_disjoint()
    return block
