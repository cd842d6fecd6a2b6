from .dare import NoConvergence, dare_residual, solve_dare
from .sets import (
    IterationCap,
    approximate_mrpi,
    max_invariant_set,
    mrpi_invariance_gap,
    pontryagin_difference,
)
from .mpc import (
    CondensedQp,
    LinearSystem,
    MpcSpec,
    NonConvexCost,
    build_inner_qp,
    condense_mpc,
)
from .tube import EmptyTightenedSet, TubeAssembly, TubeMpcSpec, build_tube_mpc

__all__ = [
    "NoConvergence",
    "dare_residual",
    "solve_dare",
    "IterationCap",
    "approximate_mrpi",
    "max_invariant_set",
    "mrpi_invariance_gap",
    "pontryagin_difference",
    "CondensedQp",
    "LinearSystem",
    "MpcSpec",
    "NonConvexCost",
    "build_inner_qp",
    "condense_mpc",
    "EmptyTightenedSet",
    "TubeAssembly",
    "TubeMpcSpec",
    "build_tube_mpc",
]
