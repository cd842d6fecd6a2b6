"""Discrete-time algebraic Riccati equation by fixed-point iteration."""

from __future__ import annotations

from typing import Tuple

import numpy as np


class NoConvergence(Exception):
    pass


DARE_TOL = 1e-12
DARE_MAX_ITER = 100_000


def solve_dare(system, Q, R) -> Tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution P and gain K = (R + B'PB)^-1 B'PA.

    Iterates the Riccati map from P = Q until the infinity-norm update drops
    below 1e-12. Divergence or hitting the iteration cap raises
    NoConvergence (unstabilizable pair, or Q/R violating the assumptions).
    """
    A = np.atleast_2d(np.asarray(system.A, dtype=float))
    B = np.asarray(system.B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(DARE_MAX_ITER):
        BtPB = R + B.T @ P @ B
        BtPA = B.T @ P @ A
        P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(BtPB, BtPA)
        delta = np.max(np.abs(P_next - P))
        P = P_next
        if not np.isfinite(delta) or np.max(np.abs(P)) > 1e14:
            raise NoConvergence("Riccati iteration diverged")
        if delta <= DARE_TOL:
            K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            return P, K
    raise NoConvergence(f"no fixed point after {DARE_MAX_ITER} iterations")


def dare_residual(system, Q, R, P) -> float:
    A = np.atleast_2d(np.asarray(system.A, dtype=float))
    B = np.asarray(system.B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    BtPA = B.T @ P @ A
    res = A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA) + Q - P
    return float(np.max(np.abs(res)))
