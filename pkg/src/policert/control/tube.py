"""Tube MPC construction: tightened sets, nominal QP, control-law post-map."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..encoders import ParametricQp
from ..geometry import Polytope
from .dare import solve_dare
from .mpc import CondensedQp, MpcSpec, LinearSystem
from .sets import approximate_mrpi, max_invariant_set, pontryagin_difference


class EmptyTightenedSet(Exception):
    pass


@dataclass
class TubeMpcSpec:
    """Robust design data. W is the disturbance set on the input channel
    (the true dynamics are x+ = Ax + B(u + w), w in W)."""

    base: MpcSpec
    W: Polytope
    K: Optional[np.ndarray] = None
    E: Optional[Polytope] = None
    rpi_eps: float = 1e-3

    def resolve(self) -> "TubeMpcSpec":
        """K uses the u = Kx convention: A + BK must be Schur-stable."""
        sys = self.base.system
        if self.K is None:
            _, K_dare = solve_dare(sys, self.base.Q, self.base.R)
            self.K = -K_dare
        else:
            self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        A_cl = sys.A + sys.B @ self.K
        if np.max(np.abs(np.linalg.eigvals(A_cl))) >= 1.0:
            raise ValueError("A + BK must be Schur-stable")
        if self.E is None:
            bw_verts = self.W.vertices() @ sys.B.T
            self.E = approximate_mrpi(A_cl, bw_verts, eps=self.rpi_eps)
        return self


def _map_polytope(S: Polytope, M: np.ndarray) -> Polytope:
    """Image M S from vertices (exact for polytopes)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    verts = S.vertices() @ M.T
    if M.shape[0] == 1:
        return Polytope.from_box([verts.min()], [verts.max()])
    return Polytope.from_vertices(verts)


@dataclass
class TubeAssembly:
    """Condensed tube QP plus the data to assemble u = K(x - z0) + v0."""

    condensed: CondensedQp
    K: np.ndarray
    E: Polytope
    X_tight: Polytope
    U_tight: Polytope
    z0_map: np.ndarray
    v0_map: np.ndarray
    metadata: Dict = field(default_factory=dict)

    @property
    def output_map(self) -> np.ndarray:
        """Applied to the decision vector: v0 - K z0."""
        return self.v0_map - self.K @ self.z0_map

    @property
    def feedthrough(self) -> np.ndarray:
        return self.K


def build_tube_mpc(tube_spec: TubeMpcSpec) -> TubeAssembly:
    """Nominal MPC over tightened sets with the tube anchor constraint.

    Decision vector z = (z_0, ..., z_N, v_0, ..., v_{N-1}); the measured
    state is the QP parameter and appears only in x(0) - z_0 in E.
    """
    tube_spec.resolve()
    base = tube_spec.base
    sys, N = base.system, base.N
    n, m = sys.n, sys.m
    K, E = tube_spec.K, tube_spec.E

    X_t = pontryagin_difference(base.X, E).remove_redundant()
    KE = _map_polytope(E, K)
    U_t = pontryagin_difference(base.U, KE).remove_redundant()
    for name, S in (("state", X_t), ("input", U_t)):
        if S.is_empty():
            raise EmptyTightenedSet(f"tightened {name} set is empty")

    # terminal ingredients for the tightened nominal problem (u = u_eq + K e);
    # the base spec's own terminal set is irrelevant here, skip computing it
    if base.X_N is None:
        base.auto_terminal_set = False
    base.resolve()
    P_term = base.P_terminal
    A_cl = sys.A + sys.B @ K
    C_rows = np.vstack([X_t.C, U_t.C @ K])
    d_rows = np.concatenate([
        X_t.d - X_t.C @ base.x_eq,
        U_t.d - U_t.C @ base.u_eq,
    ])
    omega = max_invariant_set(A_cl, Polytope(C_rows, d_rows))
    X_N_t = Polytope(omega.C, omega.d + omega.C @ base.x_eq)
    if X_N_t.is_empty():
        raise EmptyTightenedSet("tightened terminal set is empty")

    n_z = (N + 1) * n + N * m

    def x_sl(i):
        return slice(i * n, (i + 1) * n)

    def u_sl(i):
        return slice((N + 1) * n + i * m, (N + 1) * n + (i + 1) * m)

    Qb = base.Q + (1e-9 * np.eye(n) if np.min(np.linalg.eigvalsh(base.Q)) <= 1e-10 else 0.0)
    Pb = P_term + (1e-9 * np.eye(n) if np.min(np.linalg.eigvalsh(P_term)) <= 1e-10 else 0.0)
    P_t = np.zeros((n_z, n_z))
    q_t = np.zeros(n_z)
    c0 = 0.0
    for i in range(N + 1):
        M = Pb if i == N else Qb
        P_t[x_sl(i), x_sl(i)] = 2.0 * M
        q_t[x_sl(i)] = -2.0 * M @ base.x_eq
        c0 += float(base.x_eq @ M @ base.x_eq)
    for i in range(N):
        P_t[u_sl(i), u_sl(i)] = 2.0 * base.R
        q_t[u_sl(i)] = -2.0 * base.R @ base.u_eq
        c0 += float(base.u_eq @ base.R @ base.u_eq)

    # nominal dynamics, no parameter coupling
    A_eq = np.zeros((N * n, n_z))
    for i in range(N):
        rows = slice(i * n, (i + 1) * n)
        A_eq[rows, x_sl(i + 1)] = np.eye(n)
        A_eq[rows, x_sl(i)] = -sys.A
        A_eq[rows, u_sl(i)] = -sys.B
    B_par = np.zeros((N * n, n))
    b_eq = np.tile(base.residual, N)

    F_rows, G_rows, g_rows = [], [], []

    def add_rows(C, d, sl, G_block=None):
        block = np.zeros((C.shape[0], n_z))
        block[:, sl] = C
        F_rows.append(block)
        G_rows.append(np.zeros((C.shape[0], n)) if G_block is None else G_block)
        g_rows.append(d)

    # tube anchor: C_E (x0 - z0) <= d_E  ->  -C_E z0 - C_E x0-coupling
    add_rows(-E.C, E.d, x_sl(0), G_block=-E.C)
    for i in range(N):
        add_rows(X_t.C, X_t.d, x_sl(i))
    add_rows(X_t.C, X_t.d, x_sl(N))
    add_rows(X_N_t.C, X_N_t.d, x_sl(N))
    for i in range(N):
        add_rows(U_t.C, U_t.d, u_sl(i))

    qp = ParametricQp(P=P_t, Q=np.zeros((n_z, n)), q=q_t,
                      A=A_eq, B=B_par, b=b_eq,
                      F=np.vstack(F_rows), G=np.vstack(G_rows),
                      g=np.concatenate(g_rows))

    x_lo, x_hi = X_t.bounding_box()
    u_lo, u_hi = U_t.bounding_box()
    t_lo, t_hi = X_t.intersect(X_N_t).bounding_box()
    z_lo = np.concatenate([np.tile(x_lo, N), t_lo, np.tile(u_lo, N)])
    z_hi = np.concatenate([np.tile(x_hi, N), t_hi, np.tile(u_hi, N)])

    z0_map = np.zeros((n, n_z))
    z0_map[:, x_sl(0)] = np.eye(n)
    v0_map = np.zeros((m, n_z))
    v0_map[:, u_sl(0)] = np.eye(m)
    u0_map = v0_map  # nominal first input of the decision vector

    condensed = CondensedQp(
        qp=qp, n=n, m=m, N=N, u0_map=u0_map,
        c0=c0, c_lin=np.zeros(n), c_quad=np.zeros((n, n)),
        z_box=(z_lo, z_hi),
        metadata={"tube": True},
    )
    return TubeAssembly(
        condensed=condensed, K=K, E=E, X_tight=X_t, U_tight=U_t,
        z0_map=z0_map, v0_map=v0_map,
        metadata={"terminal_set_rows": X_N_t.num_rows},
    )
