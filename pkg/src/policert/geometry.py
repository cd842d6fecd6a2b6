"""Polytopes in halfspace form and the small LP toolbox around them."""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection


class EmptyPolytope(Exception):
    pass


class UnboundedPolytope(Exception):
    pass


class Polytope:
    """H-representation {x | C x <= d}."""

    def __init__(self, C, d):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.d = np.atleast_1d(np.asarray(d, dtype=float))
        if self.C.shape[0] != self.d.shape[0]:
            raise ValueError("C and d row counts differ")
        if np.isnan(self.C).any() or np.isnan(self.d).any():
            raise ValueError("NaN entries in polytope data")

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def num_rows(self) -> int:
        return self.C.shape[0]

    @staticmethod
    def from_box(lb, ub) -> "Polytope":
        lb = np.atleast_1d(np.asarray(lb, dtype=float))
        ub = np.atleast_1d(np.asarray(ub, dtype=float))
        n = lb.size
        C = np.vstack([np.eye(n), -np.eye(n)])
        d = np.concatenate([ub, -lb])
        return Polytope(C, d)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.C @ np.asarray(x, dtype=float) <= self.d + tol))

    def support(self, direction) -> float:
        """sup_x c'x over the polytope; inf when empty, +inf when unbounded."""
        c = np.asarray(direction, dtype=float)
        res = linprog(-c, A_ub=self.C, b_ub=self.d,
                      bounds=[(None, None)] * self.dim, method="highs")
        if res.status == 0:
            return float(-res.fun)
        if res.status == 2:
            return -math.inf
        if res.status == 3:
            return math.inf
        raise RuntimeError(f"support LP failed: {res.message}")

    def is_empty(self, tol: float = 0.0) -> bool:
        return self.support(np.zeros(self.dim)) == -math.inf

    def is_bounded(self) -> bool:
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            if not (math.isfinite(self.support(e)) and math.isfinite(self.support(-e))):
                return False
        return True

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = np.zeros(self.dim), np.zeros(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            hi[i] = self.support(e)
            lo[i] = -self.support(-e)
        return lo, hi

    def chebyshev_center(self) -> Tuple[np.ndarray, float]:
        """Center and radius of the largest inscribed ball."""
        norms = np.linalg.norm(self.C, axis=1)
        A = np.hstack([self.C, norms[:, None]])
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=A, b_ub=self.d,
                      bounds=[(None, None)] * self.dim + [(0, None)], method="highs")
        if res.status != 0:
            raise EmptyPolytope("no Chebyshev center found")
        return res.x[:-1], float(res.x[-1])

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope(np.vstack([self.C, other.C]), np.concatenate([self.d, other.d]))

    def remove_redundant(self, tol: float = 1e-9) -> "Polytope":
        """Drop rows whose removal does not change the set (one LP per row)."""
        C, d = self.C.copy(), self.d.copy()
        keep = list(range(len(d)))
        i = 0
        while i < len(keep):
            rows = keep[:i] + keep[i + 1:]
            r = keep[i]
            res = linprog(-C[r], A_ub=C[rows], b_ub=d[rows],
                          bounds=[(None, None)] * self.dim, method="highs")
            redundant = res.status == 0 and -res.fun <= d[r] + tol
            if redundant:
                keep.pop(i)
            else:
                i += 1
        if not keep:
            keep = [0]
        return Polytope(C[keep], d[keep])

    def eliminate(self, k: int, tol: float = 1e-9) -> "Polytope":
        """Fourier-Motzkin elimination of coordinate k."""
        c = self.C[:, k]
        zero = np.abs(c) <= tol
        pos = np.where(c > tol)[0]
        neg = np.where(c < -tol)[0]
        rows = [np.delete(self.C[zero], k, axis=1)]
        ds = [self.d[zero]]
        for i in pos:
            # c_i * row_j + (-c_j) * row_i cancels coordinate k
            comb = c[i] * self.C[neg] - c[neg][:, None] * self.C[i]
            rows.append(np.delete(comb, k, axis=1))
            ds.append(c[i] * self.d[neg] - c[neg] * self.d[i])
        C = np.vstack(rows)
        d = np.concatenate(ds)
        scale = np.maximum(np.max(np.abs(C), axis=1), np.abs(d))
        trivial = (scale <= tol) & (d >= -tol)
        keep = ~trivial
        if not keep.any():
            return Polytope(np.zeros((1, self.dim - 1)), [0.0])
        scale = np.maximum(scale[keep], tol)
        return Polytope(C[keep] / scale[:, None], d[keep] / scale)

    def project(self, dims: Sequence[int], tol: float = 1e-9) -> "Polytope":
        """Orthogonal projection onto the listed (ascending) coordinates."""
        dims = sorted(dims)
        P = self
        for k in reversed([i for i in range(self.dim) if i not in dims]):
            P = P.eliminate(k, tol).remove_redundant()
        return P

    def vertices(self) -> np.ndarray:
        """Vertex enumeration; requires a bounded, full-dimensional-ish set."""
        if self.dim == 1:
            hi = self.support(np.ones(1))
            lo = -self.support(-np.ones(1))
            if lo > hi:
                raise EmptyPolytope("empty interval")
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise UnboundedPolytope("unbounded interval")
            return np.array([[lo], [hi]]) if hi > lo else np.array([[lo]])
        center, radius = self.chebyshev_center()
        if not self.is_bounded():
            raise UnboundedPolytope("vertex enumeration needs a bounded polytope")
        if radius <= 1e-12:
            # degenerate (lower-dimensional); fall back to support sampling
            return np.array([center])
        halfspaces = np.hstack([self.C, -self.d[:, None]])
        hs = HalfspaceIntersection(halfspaces, center)
        pts = hs.intersections
        hull = ConvexHull(pts)
        return pts[hull.vertices]

    @staticmethod
    def from_vertices(points) -> "Polytope":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[1]
        if n == 1:
            return Polytope.from_box([pts.min()], [pts.max()])
        hull = ConvexHull(pts)
        return Polytope(hull.equations[:, :-1], -hull.equations[:, -1])

    def scale(self, factor: float) -> "Polytope":
        return Polytope(self.C, self.d * factor)

    def affine_preimage(self, M) -> "Polytope":
        """{x | Mx in self}."""
        return Polytope(self.C @ np.asarray(M, dtype=float), self.d)

    def to_json_dict(self) -> dict:
        return {"C": self.C.tolist(), "d": self.d.tolist()}

    @staticmethod
    def from_json_dict(data: dict) -> "Polytope":
        return Polytope(np.array(data["C"], dtype=float), np.array(data["d"], dtype=float))

    def __repr__(self) -> str:
        return f"Polytope({self.num_rows} rows, dim {self.dim})"


def minkowski_sum_vertices(vertex_sets: Sequence[np.ndarray]) -> np.ndarray:
    """Vertices of a Minkowski sum, pruning with a convex hull at each step."""
    acc = np.zeros((1, vertex_sets[0].shape[1]))
    for vs in vertex_sets:
        pts = (acc[:, None, :] + vs[None, :, :]).reshape(-1, acc.shape[1])
        if pts.shape[1] == 1:
            acc = np.array([[pts.min()], [pts.max()]])
        elif pts.shape[0] > pts.shape[1]:
            try:
                hull = ConvexHull(pts)
                acc = pts[hull.vertices]
            except Exception:
                acc = pts
        else:
            acc = pts
    return acc
