"""MPC condensation into a parametric QP.

The sparse form keeps every state and input as a decision variable,
z = (x_1, ..., x_N, u_0, ..., u_{N-1}), with the initial state entering
through the parameter columns of the dynamics equalities. Equilibrium
shifting moves the constant cost terms into a reported offset so objective
values remain comparable to a direct rollout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..encoders import ParametricQp
from ..geometry import Polytope
from .dare import solve_dare
from .sets import max_invariant_set

STATE_REG = 1e-9


class NonConvexCost(Exception):
    pass


@dataclass
class LinearSystem:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise ValueError("system matrices must be finite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u) -> np.ndarray:
        return self.A @ np.atleast_1d(x) + self.B @ np.atleast_1d(u)


@dataclass
class MpcSpec:
    """Finite-horizon regulator toward (x_eq, u_eq).

    P_terminal=None resolves to the DARE solution; X_N=None with
    auto_terminal_set=True resolves to the maximal invariant set of the LQR
    loop in shifted coordinates; with auto_terminal_set=False the problem
    has no terminal constraint.
    """

    system: LinearSystem
    N: int
    Q: np.ndarray
    R: np.ndarray
    X: Polytope
    U: Polytope
    P_terminal: Optional[np.ndarray] = None
    X_N: Optional[Polytope] = None
    x_eq: Optional[np.ndarray] = None
    u_eq: Optional[np.ndarray] = None
    auto_terminal_set: bool = True

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n, m = self.system.n, self.system.m
        self.x_eq = np.zeros(n) if self.x_eq is None else np.atleast_1d(np.asarray(self.x_eq, dtype=float))
        self.u_eq = np.zeros(m) if self.u_eq is None else np.atleast_1d(np.asarray(self.u_eq, dtype=float))
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise NonConvexCost("input weight must be positive definite")
        if np.min(np.linalg.eigvalsh(self.Q)) < -1e-10:
            raise NonConvexCost("state weight must be positive semidefinite")
        resid = np.max(np.abs(self.system.step(self.x_eq, self.u_eq) - self.x_eq))
        if resid > 1e-2:
            warnings.warn(f"equilibrium residual {resid:.3e} exceeds 1e-2",
                          stacklevel=2)
        self._resolved = False

    @property
    def residual(self) -> np.ndarray:
        """Offset making (x_eq, u_eq) an exact equilibrium of the predicted
        model x+ = Ax + Bu + r; zero when the pair is exactly consistent."""
        return self.x_eq - self.system.step(self.x_eq, self.u_eq)

    def step_shifted(self, x, u) -> np.ndarray:
        return self.system.step(x, u) + self.residual

    def resolve(self) -> "MpcSpec":
        """Fill the automatic terminal ingredients in place."""
        if self._resolved:
            return self
        if self.P_terminal is None:
            P, K = solve_dare(self.system, self.Q, self.R)
            self.P_terminal = P
            self._K_lqr = K
        else:
            self.P_terminal = np.atleast_2d(np.asarray(self.P_terminal, dtype=float))
            try:
                _, self._K_lqr = solve_dare(self.system, self.Q, self.R)
            except Exception:
                self._K_lqr = None
        if self.X_N is None and self.auto_terminal_set and self._K_lqr is not None:
            K = self._K_lqr
            A_cl = self.system.A - self.system.B @ K
            # admissibility in shifted coordinates e = x - x_eq with
            # u = u_eq - K e: state rows and input rows mapped through -K
            C_rows = np.vstack([self.X.C, -self.U.C @ K])
            d_rows = np.concatenate([
                self.X.d - self.X.C @ self.x_eq,
                self.U.d - self.U.C @ self.u_eq,
            ])
            omega = max_invariant_set(A_cl, Polytope(C_rows, d_rows))
            # back to absolute coordinates
            self.X_N = Polytope(omega.C, omega.d + omega.C @ self.x_eq)
        self._resolved = True
        return self

    def stage_cost(self, x, u) -> float:
        dx = np.atleast_1d(x) - self.x_eq
        du = np.atleast_1d(u) - self.u_eq
        return float(dx @ self.Q @ dx + du @ self.R @ du)

    def terminal_cost(self, x) -> float:
        dx = np.atleast_1d(x) - self.x_eq
        return float(dx @ self.P_terminal @ dx)

    def rollout_cost(self, x0, inputs) -> float:
        """J(x, u) for the trajectory of the (equilibrium-corrected) model."""
        x = np.atleast_1d(np.asarray(x0, dtype=float))
        total = 0.0
        for u in inputs:
            total += self.stage_cost(x, u)
            x = self.step_shifted(x, u)
        return total + self.terminal_cost(x)


@dataclass
class CondensedQp:
    """Parametric QP plus the bookkeeping to reconstruct costs and signals.

    The objective stored in ``qp`` is 0.5 z'Pz + (Qp + q)'z with parameter p;
    the full cost is that plus offset(p) = c0 + c_lin'p + p'c_quad p.
    """

    qp: ParametricQp
    n: int
    m: int
    N: int
    u0_map: np.ndarray
    c0: float
    c_lin: np.ndarray
    c_quad: np.ndarray
    z_box: Tuple[np.ndarray, np.ndarray]
    metadata: Dict = field(default_factory=dict)

    def offset(self, p) -> float:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return float(self.c0 + self.c_lin @ p + p @ self.c_quad @ p)

    def objective(self, p, z) -> float:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        z = np.asarray(z, dtype=float)
        quad = 0.5 * z @ self.qp.P @ z + (self.qp.Q @ p + self.qp.q) @ z
        return quad + self.offset(p)

    def state_slice(self, i: int) -> slice:
        """Decision block of x_{i} for i >= 1."""
        return slice((i - 1) * self.n, i * self.n)

    def input_slice(self, i: int) -> slice:
        return slice(self.N * self.n + i * self.m, self.N * self.n + (i + 1) * self.m)


def _psd_block(M: np.ndarray, reg: float) -> Tuple[np.ndarray, bool]:
    if np.min(np.linalg.eigvalsh(M)) <= 1e-10:
        return M + reg * np.eye(M.shape[0]), True
    return M, False


def condense_mpc(spec: MpcSpec) -> CondensedQp:
    """Sparse condensation of the nominal MPC into a parametric QP in x0."""
    spec.resolve()
    sys, N = spec.system, spec.N
    n, m = sys.n, sys.m
    n_z = N * n + N * m

    Qb, reg_q = _psd_block(spec.Q, STATE_REG)
    Pb, reg_p = _psd_block(np.atleast_2d(spec.P_terminal), STATE_REG)

    # 0.5 z'P~z with P~ = 2 blockdiag(Q..Q, P, R..R)
    P_t = np.zeros((n_z, n_z))
    q_t = np.zeros(n_z)
    c0 = 0.0
    for i in range(1, N + 1):
        M = Pb if i == N else Qb
        sl = slice((i - 1) * n, i * n)
        P_t[sl, sl] = 2.0 * M
        q_t[sl] = -2.0 * M @ spec.x_eq
        c0 += float(spec.x_eq @ M @ spec.x_eq)
    for i in range(N):
        sl = slice(N * n + i * m, N * n + (i + 1) * m)
        P_t[sl, sl] = 2.0 * spec.R
        q_t[sl] = -2.0 * spec.R @ spec.u_eq
        c0 += float(spec.u_eq @ spec.R @ spec.u_eq)

    # parameter-only stage cost (x0 - x_eq)'Q(x0 - x_eq)
    c_quad = spec.Q.copy()
    c_lin = -2.0 * spec.Q @ spec.x_eq
    c0 += float(spec.x_eq @ spec.Q @ spec.x_eq)

    # dynamics equalities: A z = B_par x0 + b, with the equilibrium residual
    # folded into b so (x_eq, u_eq) is an exact fixed point of the model
    r = spec.residual
    A_eq = np.zeros((N * n, n_z))
    B_par = np.zeros((N * n, n))
    b_eq = np.tile(r, N)
    for i in range(N):
        rows = slice(i * n, (i + 1) * n)
        A_eq[rows, i * n:(i + 1) * n] = np.eye(n)
        if i == 0:
            B_par[rows] = sys.A
        else:
            A_eq[rows, (i - 1) * n:i * n] = -sys.A
        A_eq[rows, N * n + i * m:N * n + (i + 1) * m] = -sys.B

    # inequalities: states in X (x_N also in X_N), inputs in U
    F_rows, g_rows = [], []
    for i in range(1, N + 1):
        sets = [spec.X]
        if i == N and spec.X_N is not None:
            sets.append(spec.X_N)
        for S in sets:
            block = np.zeros((S.num_rows, n_z))
            block[:, (i - 1) * n:i * n] = S.C
            F_rows.append(block)
            g_rows.append(S.d)
    for i in range(N):
        block = np.zeros((spec.U.num_rows, n_z))
        block[:, N * n + i * m:N * n + (i + 1) * m] = spec.U.C
        F_rows.append(block)
        g_rows.append(spec.U.d)
    F = np.vstack(F_rows)
    g = np.concatenate(g_rows)
    G = np.zeros((F.shape[0], n))

    qp = ParametricQp(P=P_t, Q=np.zeros((n_z, n)), q=q_t,
                      A=A_eq, B=B_par, b=b_eq, F=F, G=G, g=g)

    x_lo, x_hi = spec.X.bounding_box()
    u_lo, u_hi = spec.U.bounding_box()
    if spec.X_N is not None:
        t_lo, t_hi = spec.X.intersect(spec.X_N).bounding_box()
    else:
        t_lo, t_hi = x_lo, x_hi
    z_lo = np.concatenate([np.tile(x_lo, N - 1), t_lo, np.tile(u_lo, N)]) \
        if N > 1 else np.concatenate([t_lo, np.tile(u_lo, N)])
    z_hi = np.concatenate([np.tile(x_hi, N - 1), t_hi, np.tile(u_hi, N)]) \
        if N > 1 else np.concatenate([t_hi, np.tile(u_hi, N)])

    u0_map = np.zeros((m, n_z))
    u0_map[:, N * n:N * n + m] = np.eye(m)
    return CondensedQp(
        qp=qp, n=n, m=m, N=N, u0_map=u0_map,
        c0=c0, c_lin=c_lin, c_quad=c_quad, z_box=(z_lo, z_hi),
        metadata={"regularized_state_cost": bool(reg_q or reg_p),
                  "regularization": STATE_REG},
    )


def build_inner_qp(spec: MpcSpec, epsilon: float, mode: str) -> CondensedQp:
    """Inner problem of the stability programs, parameter p = (x0, u).

    mode "sufficient": same trajectory variables with the first input pinned
    to the policy output u. mode "direct": the trajectory starts at
    x~0 = A x0 + B u, so the initial state enters through [A^2, AB] columns
    and the first-stage state cost becomes parameter-quadratic.
    """
    if mode not in ("sufficient", "direct"):
        raise ValueError(f"unknown mode {mode!r}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    spec.resolve()
    base = condense_mpc(spec)
    sys, N = spec.system, spec.N
    n, m = sys.n, sys.m
    n_z = base.qp.P.shape[0]
    n_p = n + m
    AB = np.hstack([sys.A, sys.B])

    A_eq = base.qp.A.copy()
    b_eq = base.qp.b.copy()
    B_par = np.zeros((A_eq.shape[0], n_p))
    c0 = base.c0 - float(spec.x_eq @ spec.Q @ spec.x_eq)
    c_lin = np.zeros(n_p)
    c_quad = np.zeros((n_p, n_p))

    if mode == "sufficient":
        # x~0 = x0: dynamics rows i=0 couple to the x0 part of p
        B_par[:n, :n] = sys.A
        # first-stage state cost (x0 - x_eq)'Q(x0 - x_eq)
        c_quad[:n, :n] += spec.Q
        c_lin[:n] += -2.0 * spec.Q @ spec.x_eq
        c0 += float(spec.x_eq @ spec.Q @ spec.x_eq)
        # pin u~0 = u (the policy output part of p)
        pin_A = np.zeros((m, n_z))
        pin_A[:, N * n:N * n + m] = np.eye(m)
        pin_B = np.zeros((m, n_p))
        pin_B[:, n:] = np.eye(m)
        A_eq = np.vstack([A_eq, pin_A])
        B_par = np.vstack([B_par, pin_B])
        b_eq = np.concatenate([b_eq, np.zeros(m)])
        # the epsilon term epsilon x~0'x~0 is parameter-only
        c_quad[:n, :n] += epsilon * np.eye(n)
    else:
        # x~0 = A x0 + B u + r = AB p + r (one shifted-model step)
        r = spec.residual
        B_par[:n] = sys.A @ AB
        b_eq[:n] += sys.A @ r
        d0 = r - spec.x_eq
        c_quad += AB.T @ spec.Q @ AB
        c_lin += 2.0 * AB.T @ spec.Q @ d0
        c0 += float(d0 @ spec.Q @ d0)
        c_quad += epsilon * (AB.T @ AB)
        c_lin += 2.0 * epsilon * (AB.T @ r)
        c0 += float(epsilon * (r @ r))

    qp = ParametricQp(P=base.qp.P, Q=np.zeros((n_z, n_p)), q=base.qp.q,
                      A=A_eq, B=B_par, b=b_eq,
                      F=base.qp.F, G=np.zeros((base.qp.F.shape[0], n_p)),
                      g=base.qp.g)
    return CondensedQp(
        qp=qp, n=n, m=m, N=N, u0_map=base.u0_map,
        c0=c0, c_lin=c_lin, c_quad=c_quad, z_box=base.z_box,
        metadata=dict(base.metadata, mode=mode, epsilon=epsilon),
    )
