import numpy as np
import pytest

from policert.mip import LinExpr, MipModel, ObjSense, QuadObjective, Sense, VarKind
from policert.solver import (
    MipStatus,
    SolveConfig,
    solve_lp,
    solve_milp,
    solve_miqp,
)


def _knapsack():
    # max 4a + 5b + 3c  s.t.  2a + 3b + 2c <= 4,  binary
    m = MipModel("knapsack")
    a = m.add_variable(VarKind.BINARY, name="a")
    b = m.add_variable(VarKind.BINARY, name="b")
    c = m.add_variable(VarKind.BINARY, name="c")
    m.add_linear(LinExpr({a: 2.0, b: 3.0, c: 2.0}), Sense.LE, 4.0)
    m.objective = QuadObjective(
        linear=LinExpr({a: 4.0, b: 5.0, c: 3.0}), sense=ObjSense.MAX)
    return m


def test_lp_simple():
    m = MipModel()
    x = m.add_variable(lb=0.0, ub=10.0)
    y = m.add_variable(lb=0.0, ub=10.0)
    m.add_linear(LinExpr({x: 1.0, y: 1.0}), Sense.LE, 4.0)
    m.objective = QuadObjective(linear=LinExpr({x: 3.0, y: 2.0}),
                                sense=ObjSense.MAX)
    res = solve_lp(m)
    assert res.objective == pytest.approx(12.0, abs=1e-8)


def test_knapsack_optimum():
    # only one item fits alongside another: {a, c} gives value 7 within
    # weight 4; no feasible combination reaches 8
    sol = solve_milp(_knapsack())
    assert sol.status is MipStatus.OPTIMAL
    assert sol.objective == pytest.approx(7.0, abs=1e-8)
    assert sol.bound == pytest.approx(7.0, abs=1e-6)


def test_knapsack_incumbent_is_integral():
    sol = solve_milp(_knapsack())
    vals = sol.incumbent[:3]
    assert np.all(np.abs(vals - np.round(vals)) < 1e-7)
    assert np.round(vals).tolist() == [1.0, 0.0, 1.0]


def test_infeasible_binaries():
    m = MipModel()
    a = m.add_variable(VarKind.BINARY)
    b = m.add_variable(VarKind.BINARY)
    m.add_linear(LinExpr({a: 1.0, b: 1.0}), Sense.GE, 1.5)
    m.add_linear(LinExpr({a: 1.0, b: 1.0}), Sense.LE, 0.5)
    m.objective = QuadObjective(linear=LinExpr({a: 1.0}))
    sol = solve_milp(m)
    assert sol.status is MipStatus.INFEASIBLE
    assert sol.incumbent is None


def test_miqp_concave_scalar():
    # min -x^2 on [-1, 2]: optimum -4 at x = 2
    m = MipModel()
    x = m.add_variable(lb=-1.0, ub=2.0)
    m.objective.add_quad(x, x, -2.0)
    sol = solve_miqp(m, SolveConfig(gap_tol=1e-9))
    assert sol.status is MipStatus.OPTIMAL
    assert sol.objective == pytest.approx(-4.0, abs=1e-6)
    assert sol.incumbent[x] == pytest.approx(2.0, abs=1e-4)


def test_miqp_convex_scalar():
    # min x^2 - 2x on [0, 3]: optimum -1 at x = 1
    m = MipModel()
    x = m.add_variable(lb=0.0, ub=3.0)
    m.objective.add_quad(x, x, 2.0)
    m.objective.linear.add_term(x, -2.0)
    sol = solve_miqp(m, SolveConfig(gap_tol=1e-9))
    assert sol.status is MipStatus.OPTIMAL
    assert sol.objective == pytest.approx(-1.0, abs=1e-6)
    assert sol.incumbent[x] == pytest.approx(1.0, abs=1e-4)


def test_miqp_indefinite_vs_grid():
    # min -x^2 - y^2 + xy over the unit box, checked against a dense grid
    m = MipModel()
    x = m.add_variable(lb=-1.0, ub=1.0)
    y = m.add_variable(lb=-1.0, ub=1.0)
    m.objective.add_quad(x, x, -2.0)
    m.objective.add_quad(y, y, -2.0)
    m.objective.add_quad(x, y, 1.0)
    sol = solve_miqp(m, SolveConfig(gap_tol=1e-7))
    g = np.linspace(-1.0, 1.0, 201)
    X, Y = np.meshgrid(g, g)
    ref = float(np.min(-X**2 - Y**2 + X * Y))
    assert sol.status is MipStatus.OPTIMAL
    assert abs(sol.objective - ref) <= 1e-3
    assert sol.bound <= ref + 1e-6


def test_miqp_maximize_sense():
    m = MipModel()
    x = m.add_variable(lb=0.0, ub=3.0)
    m.objective = QuadObjective(sense=ObjSense.MAX)
    m.objective.add_quad(x, x, -2.0)
    m.objective.linear.add_term(x, 2.0)
    sol = solve_miqp(m, SolveConfig(gap_tol=1e-9))
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    assert sol.incumbent[x] == pytest.approx(1.0, abs=1e-4)


def test_bound_side_of_optimum():
    # the reported bound must never cross the incumbent in minimization
    m = _knapsack()
    sol = solve_milp(m, SolveConfig(gap_tol=1e-9))
    # maximization: bound is an upper bound on the optimum
    assert sol.bound >= sol.objective - 1e-9


def test_node_limit_keeps_valid_bound():
    rng = np.random.default_rng(3)
    m = MipModel()
    xs = [m.add_variable(VarKind.BINARY) for _ in range(12)]
    w = rng.uniform(1.0, 5.0, 12)
    v = rng.uniform(1.0, 5.0, 12)
    m.add_linear(LinExpr(dict(zip(xs, w))), Sense.LE, float(w.sum()) / 3)
    m.objective = QuadObjective(linear=LinExpr(dict(zip(xs, v))),
                                sense=ObjSense.MAX)
    full = solve_milp(m, SolveConfig(gap_tol=1e-9))
    capped = solve_milp(m, SolveConfig(node_limit=3))
    assert full.status is MipStatus.OPTIMAL
    assert capped.bound >= full.objective - 1e-9


def test_determinism_bitwise():
    cfg = SolveConfig(deterministic=True, gap_tol=1e-9)
    a = solve_milp(_knapsack(), cfg)
    b = solve_milp(_knapsack(), cfg)
    assert a.objective == b.objective
    assert a.bound == b.bound
    assert a.nodes == b.nodes
    assert np.array_equal(a.incumbent, b.incumbent)


def test_fractional_relaxation_rounds_down():
    # LP relaxation gives 1.5; the binary optimum is 1
    m = MipModel()
    a = m.add_variable(VarKind.BINARY)
    b = m.add_variable(VarKind.BINARY)
    m.add_linear(LinExpr({a: 1.0, b: 1.0}), Sense.LE, 1.5)
    m.objective = QuadObjective(linear=LinExpr({a: 1.0, b: 1.0}),
                                sense=ObjSense.MAX)
    sol = solve_milp(m)
    assert sol.objective == pytest.approx(1.0, abs=1e-9)


def test_gap_definition():
    sol = solve_milp(_knapsack(), SolveConfig(gap_tol=1e-9))
    assert sol.gap <= 1e-9 + 1e-12
