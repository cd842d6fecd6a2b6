"""Solver configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional


@dataclass
class SolveConfig:
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    gap_tol: float = 1e-5
    node_limit: int = 10_000_000
    time_limit: float = float("inf")
    deterministic: bool = False
    threads: int = 1
    # stop as soon as the proven bound reaches this value (objective sense:
    # for minimization, bound >= target); useful when only a sign or
    # threshold decision is needed rather than the optimum
    bound_target: Optional[float] = None

    def __post_init__(self):
        if self.feas_tol <= 0 or self.int_tol <= 0 or self.gap_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.deterministic:
            self.threads = 1

    def copy(self, **changes) -> "SolveConfig":
        return replace(self, **changes)
