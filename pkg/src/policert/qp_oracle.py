"""Reference QP solver used as the ground-truth forward map.

Interior-point solve via cvxopt followed by an active-set polish: identify
the near-active constraints, then solve the equality-constrained KKT linear
system exactly. The polished point is accurate to linear-solver precision,
which the encoder tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

import cvxopt

cvxopt.solvers.options["show_progress"] = False

ACTIVE_TOL = 1e-7


class QpInfeasible(Exception):
    pass


@dataclass
class QpSolution:
    z: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    objective: float
    active_set: np.ndarray


def solve_qp(
    P: np.ndarray,
    q: np.ndarray,
    A: Optional[np.ndarray] = None,
    b: Optional[np.ndarray] = None,
    F: Optional[np.ndarray] = None,
    g: Optional[np.ndarray] = None,
    polish: bool = True,
) -> QpSolution:
    """min 0.5 z'Pz + q'z  s.t.  Az = b, Fz <= g."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = P.shape[0]
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    F = np.zeros((0, n)) if F is None else np.atleast_2d(np.asarray(F, dtype=float))
    g = np.zeros(0) if g is None else np.atleast_1d(np.asarray(g, dtype=float))

    kwargs = {}
    if F.shape[0]:
        kwargs["G"] = cvxopt.matrix(F)
        kwargs["h"] = cvxopt.matrix(g)
    if A.shape[0]:
        kwargs["A"] = cvxopt.matrix(A)
        kwargs["b"] = cvxopt.matrix(b)
    sol = cvxopt.solvers.qp(cvxopt.matrix(P), cvxopt.matrix(q), **kwargs)
    if sol["status"] not in ("optimal", "unknown"):
        raise QpInfeasible(f"qp status: {sol['status']}")
    z = np.array(sol["x"]).ravel()
    lam = np.array(sol["z"]).ravel() if F.shape[0] else np.zeros(0)
    mu = np.array(sol["y"]).ravel() if A.shape[0] else np.zeros(0)
    active = np.zeros(F.shape[0], dtype=bool)
    if F.shape[0]:
        slack = g - F @ z
        active = (slack < ACTIVE_TOL) | (lam > 1e-5)

    if polish:
        polished = _polish(P, q, A, b, F, g, active)
        if polished is not None:
            z2, mu2, lam2, act2 = polished
            obj2 = 0.5 * z2 @ P @ z2 + q @ z2
            obj1 = 0.5 * z @ P @ z + q @ z
            feas2 = _feasible(z2, A, b, F, g)
            if feas2 and obj2 <= obj1 + 1e-9:
                return QpSolution(z2, mu2, lam2, obj2, act2)
    return QpSolution(z, mu, lam, 0.5 * z @ P @ z + q @ z, active)


def _feasible(z, A, b, F, g, tol=1e-7) -> bool:
    if A.shape[0] and np.max(np.abs(A @ z - b)) > tol:
        return False
    if F.shape[0] and np.max(F @ z - g) > tol:
        return False
    return True


def _polish(P, q, A, b, F, g, active):
    """Equality KKT solve on the guessed active set; drop rows with negative
    multipliers and retry a few times."""
    act = active.copy()
    n = P.shape[0]
    for _ in range(active.size + 1):
        Fa = F[act]
        E = np.vstack([A, Fa]) if A.shape[0] or Fa.shape[0] else np.zeros((0, n))
        rhs_eq = np.concatenate([b, g[act]])
        k = E.shape[0]
        kkt = np.block([[P, E.T], [E, np.zeros((k, k))]])
        rhs = np.concatenate([-q, rhs_eq])
        try:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        except np.linalg.LinAlgError:
            return None
        z = sol[:n]
        mults = sol[n:]
        mu = mults[: A.shape[0]]
        lam_a = mults[A.shape[0]:]
        if lam_a.size and lam_a.min() < -1e-9:
            # wrong guess: release the most negative multiplier
            idx = np.flatnonzero(act)[int(np.argmin(lam_a))]
            act[idx] = False
            continue
        lam = np.zeros(F.shape[0])
        lam[act] = np.maximum(lam_a, 0.0)
        if F.shape[0] and np.max(F @ z - g) > 1e-8:
            # a released constraint got violated; give up on polishing
            return None
        return z, mu, lam, act
    return None
