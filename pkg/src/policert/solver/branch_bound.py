"""Branch-and-bound engine.

One engine covers both pure binary branching (MILP) and spatial branching on
rotated quadratic coordinates (indefinite MIQP, see :mod:`.miqp`). Node
selection is best-bound with newest-first tie breaking, which plunges
depth-first among nodes of equal bound.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..mip.model import MipModel, ObjSense
from .config import SolveConfig
from .lp import CompiledLp, LpStatus
from ..mip.model import VarId


class MipStatus(Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"
    BOUND_TARGET = "bound_target"


@dataclass
class MipSolution:
    status: MipStatus
    incumbent: Optional[np.ndarray]
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float


@dataclass
class SpatialVar:
    """Rotated coordinate y with envelope variable w standing in for y**2.

    ``lam`` is the eigenvalue in minimization sense: positive values get
    tangent under-estimators, negative values the secant over-estimator.
    """

    y: VarId
    w: VarId
    lam: float


@dataclass
class _Node:
    bound: float
    seq: int
    overrides: Dict[int, Tuple[float, float]]
    tangents: Dict[int, Tuple[float, ...]]
    depth: int

    def __lt__(self, other: "_Node") -> bool:
        # newest-first among equal bounds -> depth-first plunging
        return (self.bound, -self.seq) < (other.bound, -other.seq)


MAX_TANGENTS = 8


class BranchAndBound:
    def __init__(
        self,
        model: MipModel,
        config: SolveConfig,
        spatial: Sequence[SpatialVar] = (),
        exact_objective: Optional[Callable[[np.ndarray], float]] = None,
        feasibility_model: Optional[MipModel] = None,
    ):
        self.model = model
        self.config = config
        self.spatial = list(spatial)
        self.compiled = CompiledLp(model)
        self.minimize = model.objective.sense is ObjSense.MIN
        self.exact_objective = exact_objective or (
            lambda x: model.objective.linear.value(x)
        )
        # constraints checked on incumbents (the original model by default)
        self.feas_model = feasibility_model or model
        self.binaries = model.binary_vars()
        self._seq = 0

    # objective values are normalized to minimization internally
    def _minval(self, v: float) -> float:
        return v if self.minimize else -v

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _var_interval(self, node: _Node, v: int) -> Tuple[float, float]:
        if v in node.overrides:
            return node.overrides[v]
        var = self.model.variables[v]
        return var.lb, var.ub

    def _cut_rows(self, node: _Node):
        rows = []
        for s in self.spatial:
            lo, hi = self._var_interval(node, s.y)
            if s.lam < 0:
                # secant over-estimator of y^2 on [lo, hi]: w <= (lo+hi) y - lo*hi
                rows.append(({s.w: 1.0, s.y: -(lo + hi)}, -lo * hi))
            else:
                # endpoint tangents tighten as the interval shrinks, so the
                # convex envelope error vanishes under spatial branching even
                # after the lazy-tangent budget is spent
                for p in (lo, hi):
                    rows.append(({s.w: -1.0, s.y: 2.0 * p}, p * p))
            for p in node.tangents.get(s.y, ()):
                # tangent under-estimator: w >= 2 p y - p^2
                rows.append(({s.w: -1.0, s.y: 2.0 * p}, p * p))
        return rows

    def _solve_node(self, node: _Node):
        """LP with node bounds and envelope rows, refining tangents lazily."""
        for _ in range(4):
            res = self.compiled.solve(
                bound_overrides=node.overrides, extra_ub=self._cut_rows(node)
            )
            if res.status is not LpStatus.OPTIMAL:
                return res
            added = False
            for s in self.spatial:
                if s.lam <= 0:
                    continue
                pts = node.tangents.get(s.y, ())
                yv = res.primal[s.y]
                if yv * yv - res.primal[s.w] > 1e-9:
                    # rotate out the stalest tangent so fresh LP optima keep
                    # tightening the envelope instead of forcing a branch
                    node.tangents[s.y] = (pts + (yv,))[-MAX_TANGENTS:]
                    added = True
            if not added:
                return res
        return res

    def _branch_binary(self, x) -> Optional[int]:
        best, best_frac = None, self.config.int_tol
        for b in self.binaries:
            frac = min(x[b] - math.floor(x[b]), math.ceil(x[b]) - x[b])
            if frac > best_frac:
                best, best_frac = b, frac
        return best

    def _branch_spatial(self, node: _Node, x) -> Optional[SpatialVar]:
        best, best_viol = None, 1e-10
        for s in self.spatial:
            viol = abs(s.lam) * abs(x[s.w] - x[s.y] ** 2)
            if viol > best_viol:
                best, best_viol = s, viol
        return best

    def _child(self, node: _Node, bound: float, updates: Dict[int, Tuple[float, float]]) -> _Node:
        overrides = dict(node.overrides)
        overrides.update(updates)
        tangents = {v: p[-MAX_TANGENTS:] for v, p in node.tangents.items()}
        return _Node(bound, self._next_seq(), overrides, tangents, node.depth + 1)

    def _spatial_children(self, node: _Node, bound: float, s: SpatialVar) -> List[_Node]:
        lo, hi = self._var_interval(node, s.y)
        mid = 0.5 * (lo + hi)
        children = []
        for ylo, yhi in ((lo, mid), (mid, hi)):
            wlo = 0.0 if ylo <= 0.0 <= yhi else min(ylo * ylo, yhi * yhi)
            whi = max(ylo * ylo, yhi * yhi)
            children.append(
                self._child(node, bound, {s.y: (ylo, yhi), s.w: (wlo, whi)})
            )
        return children

    def _polish(self, x: np.ndarray) -> Optional[np.ndarray]:
        """Re-solve with binaries pinned to their rounded values."""
        overrides = {b: (round(x[b]), round(x[b])) for b in self.binaries}
        res = self.compiled.solve(bound_overrides=overrides)
        if res.status is not LpStatus.OPTIMAL:
            return None
        return res.primal

    def solve(self) -> MipSolution:
        cfg = self.config
        t0 = time.monotonic()
        inc_x: Optional[np.ndarray] = None
        inc_min = math.inf  # incumbent objective, minimization sense
        worst_pruned = math.inf
        nodes_done = 0
        status: Optional[MipStatus] = None

        root = _Node(-math.inf, self._next_seq(), {}, {}, 0)
        heap: List[_Node] = [root]
        lb_global = -math.inf
        target = None
        if cfg.bound_target is not None:
            target = cfg.bound_target if self.minimize else -cfg.bound_target

        def cutoff() -> float:
            if not math.isfinite(inc_min):
                return math.inf
            return inc_min - cfg.gap_tol * max(1.0, abs(inc_min))

        while heap:
            node = heapq.heappop(heap)
            lb_global = max(lb_global, node.bound)
            if target is not None and node.bound >= target:
                # best-bound order: every open node is at least this good,
                # so the requested bound is proven
                status = MipStatus.BOUND_TARGET
                lb_global = node.bound
                break
            if node.bound >= cutoff():
                worst_pruned = min(worst_pruned, node.bound)
                continue
            if nodes_done >= cfg.node_limit:
                status = MipStatus.NODE_LIMIT
                lb_global = min(lb_global, node.bound)
                break
            if time.monotonic() - t0 > cfg.time_limit:
                status = MipStatus.TIME_LIMIT
                lb_global = min(lb_global, node.bound)
                break

            nodes_done += 1
            res = self._solve_node(node)
            if res.status is LpStatus.INFEASIBLE:
                continue
            if res.status is LpStatus.UNBOUNDED:
                # relaxation unbounded at the root means the MIP is unbounded
                # or lacks finite bounds; surface as a failure value
                raise ValueError("relaxation is unbounded; add finite bounds")
            val = self._minval(res.objective)
            val = max(val, node.bound)  # keep the path monotone
            if val >= cutoff():
                worst_pruned = min(worst_pruned, val)
                continue
            x = res.primal

            bvar = self._branch_binary(x)
            if bvar is not None:
                for fix in (0.0, 1.0):
                    heapq.heappush(heap, self._child(node, val, {bvar: (fix, fix)}))
                continue

            # integral point: exact objective gives a feasible incumbent
            cand = x
            if any(min(x[b], 1.0 - x[b]) > 1e-12 for b in self.binaries):
                polished = self._polish(x)
                if polished is not None:
                    cand = polished
            if self.feas_model.constraint_violation(cand) <= 10.0 * cfg.feas_tol:
                cand_min = self._minval(self.exact_objective(cand))
                if cand_min < inc_min:
                    inc_min = cand_min
                    inc_x = cand.copy()

            if val >= cutoff():
                worst_pruned = min(worst_pruned, val)
                continue
            svar = self._branch_spatial(node, x)
            if svar is None:
                # envelope-tight and integral; nothing left to split
                worst_pruned = min(worst_pruned, val)
                continue
            for child in self._spatial_children(node, val, svar):
                heapq.heappush(heap, child)

        wall = time.monotonic() - t0
        if status is None:
            # tree exhausted
            bound_min = min(worst_pruned, inc_min)
            if inc_x is None:
                return MipSolution(MipStatus.INFEASIBLE, None, math.inf, math.inf,
                                   0.0, nodes_done, wall)
            status = MipStatus.OPTIMAL
        else:
            open_bounds = [n.bound for n in heap]
            bound_min = min([worst_pruned, lb_global] + open_bounds)
            if inc_x is None:
                obj = math.inf if self.minimize else -math.inf
                bound = bound_min if self.minimize else -bound_min
                return MipSolution(status, None, obj, bound, math.inf, nodes_done, wall)

        obj = inc_min if self.minimize else -inc_min
        bound = bound_min if self.minimize else -bound_min
        gap = abs(obj - bound) / max(1.0, abs(obj))
        if status is MipStatus.OPTIMAL and gap > cfg.gap_tol:
            status = MipStatus.FEASIBLE
        return MipSolution(status, inc_x, obj, bound, gap, nodes_done, wall)


def solve_milp(model: MipModel, config: Optional[SolveConfig] = None) -> MipSolution:
    """Solve a mixed-integer linear program to the configured gap."""
    if not model.objective.is_linear():
        raise ValueError("solve_milp requires a linear objective; use solve_miqp")
    cfg = config or SolveConfig()
    return BranchAndBound(model, cfg).solve()
