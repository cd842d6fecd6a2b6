"""Disaggregated mixed-integer encoding of piecewise affine maps."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import Polytope
from ..mip.model import LinExpr, MipModel, Sense, VarKind
from .blocks import EncodingError, GraphBlock


class UnboundedRegion(EncodingError):
    pass


class NoRegionFound(EncodingError):
    pass


@dataclass
class PwaRegion:
    """One piece: u = A x + c on the polytope {F x <= g}."""

    F: np.ndarray
    g: np.ndarray
    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))

    @property
    def polytope(self) -> Polytope:
        return Polytope(self.F, self.g)

    def evaluate(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.c


@dataclass
class PwaFunction:
    regions: List[PwaRegion]

    @property
    def input_dim(self) -> int:
        return self.regions[0].A.shape[1]

    @property
    def output_dim(self) -> int:
        return self.regions[0].A.shape[0]

    def find_region(self, x, tol: float = 1e-9) -> int:
        for i, r in enumerate(self.regions):
            if r.polytope.contains(x, tol=tol):
                return i
        raise NoRegionFound(f"point {x} lies in no region")

    def evaluate(self, x) -> np.ndarray:
        return self.regions[self.find_region(x)].evaluate(x)


def check_continuity_sampled(
    pwa: PwaFunction, samples_per_pair: int = 20, tol: float = 1e-8,
    rng: Optional[np.random.Generator] = None,
) -> bool:
    """Sample shared facets of region pairs and compare both affine maps.

    A mismatch issues a warning and returns False; this is a sampled check,
    not a proof.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    ok = True
    n = len(pwa.regions)
    for i in range(n):
        for j in range(i + 1, n):
            ri, rj = pwa.regions[i], pwa.regions[j]
            shared = ri.polytope.intersect(rj.polytope)
            try:
                center, radius = shared.chebyshev_center()
            except Exception:
                continue
            lo, hi = None, None
            try:
                lo, hi = shared.bounding_box()
            except Exception:
                continue
            if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
                continue
            # a shared facet is lower-dimensional; LP tolerance can leave
            # the degenerate coordinates with hi marginally below lo
            hi = np.maximum(hi, lo)
            pts = [center]
            for _ in range(samples_per_pair - 1):
                # random convex combination of box samples pulled toward
                # the center stays near the shared set
                raw = rng.uniform(lo, hi)
                t = rng.uniform(0.0, 1.0)
                pts.append(center + t * (raw - center) * 1e-3)
            for p in pts:
                if shared.contains(p, tol=1e-7):
                    if np.max(np.abs(ri.evaluate(p) - rj.evaluate(p))) > tol:
                        warnings.warn(
                            f"regions {i} and {j} disagree at a shared point",
                            stacklevel=2,
                        )
                        ok = False
                        break
    return ok


def encode_pwa(
    model: MipModel,
    pwa: PwaFunction,
    input_polytope: Optional[Polytope] = None,
    input_vars: Optional[Sequence[int]] = None,
) -> GraphBlock:
    """Disaggregated encoding: one binary and one copy of x per region.

    Rows per region i: F_i x_i <= beta_i g_i; globally sum beta = 1,
    x = sum x_i, u = sum (A_i x_i + beta_i c_i). Needs every region bounded,
    since x_i must vanish when its binary is off.
    """
    n_x, n_u = pwa.input_dim, pwa.output_dim
    boxes: List[Tuple[np.ndarray, np.ndarray]] = []
    for k, region in enumerate(pwa.regions):
        poly = region.polytope
        lo, hi = poly.bounding_box()
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise UnboundedRegion(f"region {k} is unbounded")
        boxes.append((lo, hi))

    internals: List[int] = []
    if input_vars is None:
        glo = np.min([b[0] for b in boxes], axis=0)
        ghi = np.max([b[1] for b in boxes], axis=0)
        xs = [model.add_variable(lb=float(l), ub=float(h)) for l, h in zip(glo, ghi)]
        if input_polytope is not None:
            for row, rhs in zip(input_polytope.C, input_polytope.d):
                e = LinExpr()
                for v, c in zip(xs, row):
                    if c != 0.0:
                        e.add_term(v, float(c))
                model.add_linear(e, Sense.LE, float(rhs))
    else:
        xs = list(input_vars)
        if len(xs) != n_x:
            raise EncodingError("input variable count mismatch")

    betas = model.add_variables(len(pwa.regions), kind=VarKind.BINARY)
    internals.extend(betas)
    copies: List[List[int]] = []
    for k, (region, (lo, hi)) in enumerate(zip(pwa.regions, boxes)):
        xk = [model.add_variable(lb=min(float(l), 0.0), ub=max(float(h), 0.0))
              for l, h in zip(lo, hi)]
        internals.extend(xk)
        copies.append(xk)
        beta = betas[k]
        for row, rhs in zip(region.F, region.g):
            e = LinExpr()
            for v, c in zip(xk, row):
                if c != 0.0:
                    e.add_term(v, float(c))
            e.add_term(beta, -float(rhs))
            model.add_linear(e, Sense.LE, 0.0, "pwa-region")
        # off binary forces the copy to zero
        for v, l, h in zip(xk, lo, hi):
            model.add_linear(LinExpr({v: 1.0, beta: -max(float(h), 0.0)}),
                             Sense.LE, 0.0, "pwa-off-hi")
            model.add_linear(LinExpr({v: -1.0, beta: min(float(l), 0.0)}),
                             Sense.LE, 0.0, "pwa-off-lo")

    e = LinExpr({b: 1.0 for b in betas})
    model.add_linear(e, Sense.EQ, 1.0, "pwa-select")
    for d in range(n_x):
        e = LinExpr({xs[d]: -1.0})
        for xk in copies:
            e.add_term(xk[d], 1.0)
        model.add_linear(e, Sense.EQ, 0.0, "pwa-sum")

    outputs = model.add_variables(n_u)
    for r in range(n_u):
        e = LinExpr({outputs[r]: -1.0})
        for region, xk, beta in zip(pwa.regions, copies, betas):
            for v, c in zip(xk, region.A[r]):
                if c != 0.0:
                    e.add_term(v, float(c))
            if region.c[r] != 0.0:
                e.add_term(beta, float(region.c[r]))
        model.add_linear(e, Sense.EQ, 0.0, "pwa-out")

    block = GraphBlock(xs, list(outputs), internals)
    block.check_disjoint()
    return block
