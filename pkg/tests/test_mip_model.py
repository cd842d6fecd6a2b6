import math

import numpy as np
import pytest

from policert.mip import (
    BoundsInverted,
    LinExpr,
    MipModel,
    NonFiniteCoefficient,
    ObjSense,
    QuadObjective,
    Sense,
    UnknownVariable,
    VarKind,
    export_lp_text,
    struct_equal,
)


def test_variable_ids_are_dense():
    m = MipModel()
    assert m.add_variable(lb=-1.0, ub=1.0) == 0
    m.add_variable()
    m.add_variable()
    assert m.add_variable(VarKind.BINARY) == 3


def test_inverted_bounds_rejected():
    m = MipModel()
    with pytest.raises(BoundsInverted):
        m.add_variable(lb=2.0, ub=1.0)


def test_constraint_validation():
    m = MipModel()
    x = m.add_variable(lb=0.0, ub=1.0)
    m.add_linear(LinExpr({x: 1.0}), Sense.LE, 1.0)
    m.validate()

    with pytest.raises(UnknownVariable):
        m.add_linear(LinExpr({x + 7: 1.0}), Sense.LE, 0.0)


def test_nan_coefficient_rejected():
    m = MipModel()
    x = m.add_variable(lb=0.0, ub=1.0)
    with pytest.raises(NonFiniteCoefficient):
        m.add_linear(LinExpr({x: math.nan}), Sense.LE, 0.0)


def test_validation_idempotent():
    m = MipModel()
    x = m.add_variable(lb=0.0, ub=10.0)
    m.add_linear(LinExpr({x: 1.0}), Sense.GE, 1.0)
    m.validate()
    m.validate()


def test_adding_constraint_does_not_mutate_existing():
    m = MipModel()
    x = m.add_variable(lb=0.0, ub=1.0)
    m.add_linear(LinExpr({x: 1.0}), Sense.LE, 1.0)
    before = (dict(m.constraints[0].expr.terms), m.constraints[0].rhs)
    m.add_linear(LinExpr({x: 2.0}), Sense.GE, 0.5)
    after = (dict(m.constraints[0].expr.terms), m.constraints[0].rhs)
    assert before == after


def test_lp_export_skeleton():
    m = MipModel("tiny")
    x = m.add_variable(lb=0.0, ub=10.0, name="x")
    m.add_linear(LinExpr({x: 1.0}), Sense.GE, 1.0)
    m.objective.linear.add_term(x, 1.0)
    text = export_lp_text(m)
    assert "Minimize" in text
    assert "Bounds" in text
    assert ">= 1" in text


def test_lp_export_binary_section():
    m = MipModel()
    b = m.add_variable(VarKind.BINARY, name="beta")
    m.objective.linear.add_term(b, 1.0)
    text = export_lp_text(m)
    assert "Binar" in text  # "Binaries" or "Binary" header
    assert "beta" in text or "x0" in text


def test_lp_export_quadratic_half_convention():
    # -0.5 x^2 stored means the LP quadratic section carries coefficient -1
    # under the format's [ ... ]/2 scaling
    m = MipModel()
    x = m.add_variable(lb=-1.0, ub=2.0)
    m.objective.add_quad(x, x, -1.0)
    text = export_lp_text(m)
    assert "[" in text and "] / 2" in text
    assert "^ 2" in text
    assert "- 1 x0 ^ 2" in text


def test_struct_equal_ignores_names():
    def build(name):
        m = MipModel(name)
        x = m.add_variable(lb=0.0, ub=1.0, name=name)
        m.add_linear(LinExpr({x: 1.0}), Sense.LE, 0.5, name)
        return m

    assert struct_equal(build("a"), build("b"))
    other = build("c")
    other.constraints[0].rhs = 0.6
    assert not struct_equal(build("a"), other)


def test_quad_objective_senses():
    obj = QuadObjective()
    assert obj.sense is ObjSense.MIN
    obj.sense = ObjSense.MAX
    obj.add_quad(0, 0, 2.0)
    assert obj.quad[(0, 0)] == 2.0


def test_json_dump_roundtrips_counts():
    m = MipModel("dump")
    x = m.add_variable(lb=0.0, ub=1.0)
    y = m.add_variable(VarKind.BINARY)
    m.add_linear(LinExpr({x: 1.0, y: -2.0}), Sense.LE, 0.0)
    d = m.to_json_dict()
    assert d["schema_version"] == 1
    assert len(d["variables"]) == 2
    assert len(d["constraints"]) == 1
    assert d["constraints"][0]["terms"] == [(0, 1.0), (1, -2.0)]
