"""Polytope operations for invariant-set construction."""

from __future__ import annotations

import warnings

import numpy as np

from ..geometry import Polytope, minkowski_sum_vertices
from .dare import NoConvergence


class IterationCap(Warning):
    pass


def pontryagin_difference(X: Polytope, S: Polytope) -> Polytope:
    """X minus-Minkowski S: per row c'x <= d of X, shrink d by sup_S c's."""
    d_new = np.empty_like(X.d)
    for i, (c, d) in enumerate(zip(X.C, X.d)):
        h = S.support(c)
        if not np.isfinite(h):
            raise ValueError("subtrahend must be bounded along every facet normal")
        d_new[i] = d - h
    return Polytope(X.C, d_new)


def max_invariant_set(
    A_cl: np.ndarray,
    X_constraints: Polytope,
    tol: float = 1e-9,
    max_iter: int = 500,
) -> Polytope:
    """Maximal constraint-admissible invariant set of x+ = A_cl x.

    Pre-set iteration with per-row redundancy elimination. Requires a
    Schur-stable closed loop. Hitting the iteration cap issues a warning
    and returns the last iterate (still admissible, possibly non-maximal).
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    if np.max(np.abs(np.linalg.eigvals(A_cl))) >= 1.0:
        raise ValueError("closed-loop matrix must be Schur-stable")
    omega = X_constraints
    for _ in range(max_iter):
        pre = Polytope(omega.C @ A_cl, omega.d)
        nxt = omega.intersect(pre).remove_redundant()
        if _set_equal(omega, nxt, tol):
            return nxt
        omega = nxt
    warnings.warn("invariant-set iteration hit the cap; result may be non-maximal",
                  IterationCap, stacklevel=2)
    return omega


def _set_equal(P: Polytope, Q: Polytope, tol: float) -> bool:
    """Mutual inclusion by support comparison on each other's facet normals."""
    for c, d in zip(Q.C, Q.d):
        if P.support(c) > d + tol:
            return False
    for c, d in zip(P.C, P.d):
        if Q.support(c) > d + tol:
            return False
    return True


def approximate_mrpi(A_cl: np.ndarray, BW, eps: float = 1e-3) -> Polytope:
    """Outer approximation of the minimal robust invariant set.

    Truncated Minkowski sum sum_{k<s} A_cl^k BW scaled by 1/(1-alpha), with
    s grown until A_cl^s BW is contained in alpha BW for
    alpha <= eps/(1+eps). Valid for Schur-stable A_cl and 0 in BW.

    ``BW`` is the disturbance set mapped into the state space, given as a
    Polytope or as a vertex array. A set that is not full-dimensional (for
    example a one-input disturbance in a multi-state system) is inflated by
    a tiny box first; the result is still a robust invariant outer bound.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    if np.max(np.abs(np.linalg.eigvals(A_cl))) >= 1.0:
        raise NoConvergence("spectral radius must be below one")
    n = A_cl.shape[0]
    verts = BW.vertices() if isinstance(BW, Polytope) else np.atleast_2d(np.asarray(BW, dtype=float))
    if np.max(np.abs(verts)) <= 1e-14:
        # zero disturbance: the origin
        return Polytope.from_box(np.zeros(n), np.zeros(n))
    if n > 1:
        centered = verts - verts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-12) < n:
            delta = 1e-9 * max(1.0, float(np.max(np.abs(verts))))
            corners = np.array(np.meshgrid(*[[-delta, delta]] * n)).T.reshape(-1, n)
            verts = minkowski_sum_vertices([verts, corners])
    BW = Polytope.from_vertices(verts).remove_redundant() if n > 1 else \
        Polytope.from_box([verts.min()], [verts.max()])

    alpha_target = eps / (1.0 + eps)
    s = 1
    Ak = A_cl.copy()
    max_s = 10_000
    while s < max_s:
        # alpha(s) = max_i  h_BW((A_cl^s)' c_i) / d_i
        alpha = 0.0
        for c, d in zip(BW.C, BW.d):
            h = BW.support(Ak.T @ c)
            if d <= 1e-14:
                if h > 1e-12:
                    alpha = np.inf
                continue
            alpha = max(alpha, h / d)
        if alpha <= alpha_target:
            break
        Ak = Ak @ A_cl
        s += 1
    vertex_sets = []
    M = np.eye(n)
    for _ in range(s):
        vertex_sets.append(verts @ M.T)
        M = A_cl @ M
    pts = minkowski_sum_vertices(vertex_sets) / (1.0 - alpha)
    E = Polytope.from_vertices(pts).remove_redundant()
    return E


def mrpi_invariance_gap(A_cl: np.ndarray, BW: Polytope, E: Polytope) -> float:
    """max over facets of h_E(A_cl' c) + h_BW(c) - d; <= 0 means invariant."""
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    worst = -np.inf
    for c, d in zip(E.C, E.d):
        worst = max(worst, E.support(A_cl.T @ c) + BW.support(c) - d)
    return float(worst)
