from .report import CERT_TOL, VerifyReport
from .error import error_bounding_box, worst_case_error
from .robust import verify_robust
from .stability import (
    Psi2NotZeroAtOrigin,
    RowInfeasible,
    StableRegionSpec,
    default_epsilon,
    default_x0_region,
    stable_region,
    verify_direct,
    verify_sufficient,
)

__all__ = [
    "CERT_TOL",
    "VerifyReport",
    "error_bounding_box",
    "worst_case_error",
    "verify_robust",
    "Psi2NotZeroAtOrigin",
    "RowInfeasible",
    "StableRegionSpec",
    "default_epsilon",
    "default_x0_region",
    "stable_region",
    "verify_direct",
    "verify_sufficient",
]
