"""Mixed-integer model intermediate representation.

All encoders append variables and linear constraints to a :class:`MipModel`;
the solver consumes the same structure. Bounds are extended reals (``inf``
allowed), coefficients must be finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

VarId = int


class ModelError(Exception):
    """Base class for model construction errors."""


class BoundsInverted(ModelError):
    pass


class UnknownVariable(ModelError):
    pass


class NonFiniteCoefficient(ModelError):
    pass


class VarKind(Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class ObjSense(Enum):
    MIN = "min"
    MAX = "max"


@dataclass
class Variable:
    id: VarId
    kind: VarKind
    lb: float
    ub: float
    name: Optional[str] = None


class LinExpr:
    """Sparse linear expression: sum of coefficient * variable plus constant."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Optional[Dict[VarId, float]] = None, constant: float = 0.0):
        self.terms: Dict[VarId, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    def add_term(self, var: VarId, coef: float) -> "LinExpr":
        self.terms[var] = self.terms.get(var, 0.0) + float(coef)
        return self

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def value(self, x) -> float:
        return self.constant + sum(c * x[v] for v, c in self.terms.items())

    @staticmethod
    def of(*pairs: Tuple[float, VarId], constant: float = 0.0) -> "LinExpr":
        e = LinExpr(constant=constant)
        for coef, var in pairs:
            e.add_term(var, coef)
        return e


@dataclass
class LinConstraint:
    expr: LinExpr
    sense: Sense
    rhs: float
    name: Optional[str] = None


@dataclass
class QuadObjective:
    """Objective 0.5 * x'Qx + c'x + const.

    ``quad`` stores the symmetric matrix Q sparsely with keys (i, j), i <= j,
    holding Q[i, j]. No definiteness is assumed.
    """

    quad: Dict[Tuple[VarId, VarId], float] = field(default_factory=dict)
    linear: LinExpr = field(default_factory=LinExpr)
    sense: ObjSense = ObjSense.MIN

    def add_quad(self, i: VarId, j: VarId, coef: float) -> None:
        key = (i, j) if i <= j else (j, i)
        self.quad[key] = self.quad.get(key, 0.0) + float(coef)

    def is_linear(self) -> bool:
        return not any(abs(c) > 0.0 for c in self.quad.values())

    def value(self, x) -> float:
        val = self.linear.value(x)
        for (i, j), q in self.quad.items():
            if i == j:
                val += 0.5 * q * x[i] * x[i]
            else:
                val += q * x[i] * x[j]
        return val


class MipModel:
    """Container for variables, linear constraints and a quadratic objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[LinConstraint] = []
        self.objective = QuadObjective()

    # -- construction -----------------------------------------------------

    def add_variable(
        self,
        kind: VarKind = VarKind.CONTINUOUS,
        lb: float = -math.inf,
        ub: float = math.inf,
        name: Optional[str] = None,
    ) -> VarId:
        if kind is VarKind.BINARY:
            lb, ub = 0.0, 1.0
        if lb > ub:
            raise BoundsInverted(f"lb {lb} > ub {ub} for variable {name or len(self.variables)}")
        vid = len(self.variables)
        self.variables.append(Variable(vid, kind, float(lb), float(ub), name))
        return vid

    def add_variables(self, n: int, **kwargs) -> List[VarId]:
        prefix = kwargs.pop("name", None)
        return [
            self.add_variable(name=None if prefix is None else f"{prefix}[{i}]", **kwargs)
            for i in range(n)
        ]

    def add_constraint(self, constraint: LinConstraint) -> int:
        self._check_expr(constraint.expr)
        if not math.isfinite(constraint.rhs):
            raise NonFiniteCoefficient(f"rhs {constraint.rhs} is not finite")
        self.constraints.append(constraint)
        return len(self.constraints) - 1

    def add_linear(self, expr: LinExpr, sense: Sense, rhs: float, name: Optional[str] = None) -> int:
        return self.add_constraint(LinConstraint(expr, sense, float(rhs), name))

    def set_bounds(self, var: VarId, lb: float, ub: float) -> None:
        if var < 0 or var >= len(self.variables):
            raise UnknownVariable(f"variable {var} does not exist")
        if lb > ub:
            raise BoundsInverted(f"lb {lb} > ub {ub} for variable {var}")
        self.variables[var].lb = float(lb)
        self.variables[var].ub = float(ub)

    # -- queries ----------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def binary_vars(self) -> List[VarId]:
        return [v.id for v in self.variables if v.kind is VarKind.BINARY]

    def bounds_array(self):
        return [(v.lb, v.ub) for v in self.variables]

    # -- validation -------------------------------------------------------

    def _check_expr(self, expr: LinExpr) -> None:
        for var, coef in expr.terms.items():
            if var < 0 or var >= len(self.variables):
                raise UnknownVariable(f"variable {var} does not exist")
            if not math.isfinite(coef):
                raise NonFiniteCoefficient(f"coefficient {coef} on variable {var}")
        if not math.isfinite(expr.constant):
            raise NonFiniteCoefficient(f"constant {expr.constant} is not finite")

    def validate(self) -> None:
        """Raise on structural defects; a passing model stays passing."""
        for v in self.variables:
            if v.lb > v.ub:
                raise BoundsInverted(f"variable {v.id}: lb {v.lb} > ub {v.ub}")
            if v.kind is VarKind.BINARY and (v.lb != 0.0 or v.ub != 1.0):
                raise ModelError(f"binary variable {v.id} must have bounds [0, 1]")
        for con in self.constraints:
            self._check_expr(con.expr)
            if not math.isfinite(con.rhs):
                raise NonFiniteCoefficient(f"constraint rhs {con.rhs}")
        self._check_expr(self.objective.linear)
        for (i, j), q in self.objective.quad.items():
            for var in (i, j):
                if var < 0 or var >= len(self.variables):
                    raise UnknownVariable(f"objective references variable {var}")
            if not math.isfinite(q):
                raise NonFiniteCoefficient(f"quadratic coefficient on ({i}, {j})")

    # -- evaluation helpers ----------------------------------------------

    def constraint_violation(self, x, tol: float = 0.0) -> float:
        """Maximum violation of constraints and bounds at point x."""
        worst = 0.0
        for v in self.variables:
            worst = max(worst, v.lb - x[v.id], x[v.id] - v.ub)
        for con in self.constraints:
            lhs = con.expr.value(x)
            if con.sense is Sense.LE:
                worst = max(worst, lhs - con.rhs)
            elif con.sense is Sense.GE:
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "name": self.name,
            "variables": [
                {"id": v.id, "kind": v.kind.value, "lb": v.lb, "ub": v.ub, "name": v.name}
                for v in self.variables
            ],
            "constraints": [
                {
                    "terms": sorted(c.expr.terms.items()),
                    "constant": c.expr.constant,
                    "sense": c.sense.value,
                    "rhs": c.rhs,
                    "name": c.name,
                }
                for c in self.constraints
            ],
            "objective": {
                "quad": [[i, j, q] for (i, j), q in sorted(self.objective.quad.items())],
                "linear": sorted(self.objective.linear.terms.items()),
                "constant": self.objective.linear.constant,
                "sense": self.objective.sense.value,
            },
        }


def struct_equal(a: MipModel, b: MipModel, tol: float = 0.0) -> bool:
    """Structural model equality, ignoring names."""
    da, db = a.to_json_dict(), b.to_json_dict()
    for d in (da, db):
        d.pop("name")
        for item in d["variables"] + d["constraints"]:
            item.pop("name", None)
    if tol == 0.0:
        return da == db
    return _approx_equal(da, db, tol)


def _approx_equal(a, b, tol):
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_approx_equal(a[k], b[k], tol) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_approx_equal(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        return abs(float(a) - float(b)) <= tol
    return a == b
