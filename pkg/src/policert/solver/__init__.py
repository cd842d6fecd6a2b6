from .config import SolveConfig
from .lp import CompiledLp, LpResult, LpStatus, NumericalFailure, minimize_expr, solve_lp
from .branch_bound import BranchAndBound, MipSolution, MipStatus, SpatialVar, solve_milp
from .miqp import UnboundedQuadraticVariable, solve_miqp

__all__ = [
    "SolveConfig",
    "CompiledLp",
    "LpResult",
    "LpStatus",
    "NumericalFailure",
    "minimize_expr",
    "solve_lp",
    "BranchAndBound",
    "MipSolution",
    "MipStatus",
    "SpatialVar",
    "solve_milp",
    "UnboundedQuadraticVariable",
    "solve_miqp",
]
