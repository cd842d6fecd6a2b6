"""Request and response bodies of the HTTP service."""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field

from ..solver import SolveConfig

# non-finite numbers travel as the strings "inf", "-inf", "nan" so every
# payload stays strict JSON
Number = Union[float, str]


class SolverOptions(BaseModel):
    """Optional overrides of the branch-and-bound defaults."""

    feas_tol: Optional[float] = None
    int_tol: Optional[float] = None
    gap_tol: Optional[float] = None
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    deterministic: Optional[bool] = None
    threads: Optional[int] = None

    def to_config(self, base: SolveConfig) -> SolveConfig:
        overrides = {k: v for k, v in self.model_dump().items() if v is not None}
        return base.copy(**overrides) if overrides else base


class ErrorRequest(BaseModel):
    baseline: Dict[str, Any]
    candidate: Dict[str, Any]
    domain: Dict[str, Any]
    norm: str = "inf"
    tighten: bool = False
    solver: SolverOptions = Field(default_factory=SolverOptions)


class ErrorBoxRequest(BaseModel):
    baseline: Dict[str, Any]
    candidate: Dict[str, Any]
    domain: Dict[str, Any]
    tighten: bool = False
    solver: SolverOptions = Field(default_factory=SolverOptions)


class RobustRequest(BaseModel):
    baseline: Dict[str, Any]
    candidate: Dict[str, Any]
    domain: Dict[str, Any]
    gamma_hat: float
    tighten: bool = False
    solver: SolverOptions = Field(default_factory=SolverOptions)


class StabilityRequest(BaseModel):
    baseline: Dict[str, Any]  # an {"type": "mpc"} controller spec
    candidate: Dict[str, Any]
    domain: Optional[Dict[str, Any]] = None
    epsilon: Optional[float] = None
    tighten: bool = False
    solver: SolverOptions = Field(default_factory=SolverOptions)


class StableRegionRequest(StabilityRequest):
    directions: Optional[List[List[float]]] = None


class EvaluateRequest(BaseModel):
    policy: Dict[str, Any]
    x: List[float]


class ExportRequest(BaseModel):
    policy: Dict[str, Any]
    domain: Dict[str, Any]
    tighten: bool = False


class ReportBody(BaseModel):
    kind: str
    status: str
    value: Optional[Number] = None
    bound: Optional[Number] = None
    gap: Optional[Number] = None
    witness: Optional[List[float]] = None
    certified: bool
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
    schema_version: int = 1


class ErrorBoxBody(BaseModel):
    kind: str = "ErrorBoundingBox"
    lower: List[float]
    upper: List[float]
    certified: bool = True
    schema_version: int = 1


class StableRegionBody(BaseModel):
    kind: str = "StableRegion"
    directions: List[List[float]]
    offsets: List[Number]
    empty: bool
    reports: List[ReportBody]
    schema_version: int = 1


class EvaluateBody(BaseModel):
    u: List[float]


class ExportBody(BaseModel):
    lp: str
    variables: int
    constraints: int
    binaries: int
