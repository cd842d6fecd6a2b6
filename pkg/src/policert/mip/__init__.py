from .model import (
    BoundsInverted,
    LinConstraint,
    LinExpr,
    MipModel,
    ModelError,
    NonFiniteCoefficient,
    ObjSense,
    QuadObjective,
    Sense,
    UnknownVariable,
    VarId,
    VarKind,
    Variable,
    struct_equal,
)
from .lp_format import export_lp_text

__all__ = [
    "BoundsInverted",
    "LinConstraint",
    "LinExpr",
    "MipModel",
    "ModelError",
    "NonFiniteCoefficient",
    "ObjSense",
    "QuadObjective",
    "Sense",
    "UnknownVariable",
    "VarId",
    "VarKind",
    "Variable",
    "struct_equal",
    "export_lp_text",
]
