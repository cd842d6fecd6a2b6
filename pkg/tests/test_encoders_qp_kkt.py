import numpy as np
import pytest

from policert.encoders import (
    BigMBounds,
    NotPositiveDefinite,
    ParametricQp,
    compute_bigM_bounds,
    encode_parametric_qp_kkt,
)
from policert.encoders.qp_kkt import _exclusive_pairs, _support_budget
from policert.mip import MipModel, QuadObjective
from policert.qp_oracle import solve_qp
from policert.solver import MipStatus, solve_milp


def _scalar_qp(ub=1.0):
    # min 0.5 z^2 - 2z  s.t.  z <= ub, parameter unused
    return ParametricQp(P=[[1.0]], Q=[[0.0]], q=[-2.0],
                        F=[[1.0]], G=[[0.0]], g=[ub])


BOX0 = (np.zeros(1), np.zeros(1))
ZBOX = (np.zeros(1), np.ones(1))


def test_bigM_active_scalar():
    # slack = 1 - z peaks at z = 0; stationarity gives lambda = 2 - z <= 2
    bg = compute_bigM_bounds(_scalar_qp(), BOX0, z_box=ZBOX)
    assert not bg.any_fallback()
    assert bg.M_slack[0] == pytest.approx(1.0, abs=1e-5)
    assert bg.M_dual[0] == pytest.approx(2.0, abs=1e-5)


def test_bigM_inactive_constraint_pruned():
    # z <= 100 never binds on [0, 1]: multiplier provably zero
    bg = compute_bigM_bounds(_scalar_qp(ub=100.0), BOX0, z_box=ZBOX)
    assert bg.never_active[0]
    assert bg.M_dual[0] == 0.0
    assert bg.M_slack[0] >= 99.0


def test_kkt_encoding_recovers_solution():
    qp = _scalar_qp()
    bg = compute_bigM_bounds(qp, BOX0, z_box=ZBOX)
    model = MipModel()
    x = model.add_variable(lb=0.0, ub=0.0)
    block = encode_parametric_qp_kkt(model, qp, [x], bg)
    model.objective = QuadObjective()
    sol = solve_milp(model)
    assert sol.status is MipStatus.OPTIMAL
    # unconstrained minimizer z = 2 is cut off at z = 1 with lambda = 1
    assert sol.incumbent[block.z_vars[0]] == pytest.approx(1.0, abs=1e-7)
    assert sol.incumbent[block.lam_vars[0]] == pytest.approx(1.0, abs=1e-6)
    assert sol.incumbent[block.beta_vars[0]] == pytest.approx(1.0, abs=1e-7)


def test_nonfinite_bigM_rejected():
    qp = _scalar_qp()
    bg = compute_bigM_bounds(qp, BOX0, z_box=ZBOX)
    bad = bg.scaled(np.inf)
    model = MipModel()
    x = model.add_variable(lb=0.0, ub=0.0)
    with pytest.raises(Exception):
        encode_parametric_qp_kkt(model, qp, [x], bad)


def test_not_positive_definite_rejected():
    with pytest.raises(NotPositiveDefinite):
        ParametricQp(P=[[0.0]], Q=[[0.0]], q=[0.0])
    with pytest.raises(NotPositiveDefinite):
        ParametricQp(P=[[1.0, 2.0], [2.0, 1.0]], Q=np.zeros((2, 1)),
                     q=[0.0, 0.0])


def _random_box_qp(rng, n_z, n_x):
    M = rng.normal(size=(n_z, n_z))
    P = M @ M.T + n_z * np.eye(n_z)
    Q = rng.normal(size=(n_z, n_x))
    q = rng.normal(size=n_z)
    # box rows keep every region bounded
    F = np.vstack([np.eye(n_z), -np.eye(n_z)])
    G = np.zeros((2 * n_z, n_x))
    g = rng.uniform(0.5, 2.0, size=2 * n_z)
    return ParametricQp(P=P, Q=Q, q=q, F=F, G=G, g=g)


def test_kkt_matches_oracle_random():
    rng = np.random.default_rng(7)
    for trial in range(10):
        n_z, n_x = 3, 2
        qp = _random_box_qp(rng, n_z, n_x)
        box = (-np.ones(n_x), np.ones(n_x))
        bg = compute_bigM_bounds(qp, box)
        assert not bg.any_fallback()
        for _ in range(3):
            x = rng.uniform(-1, 1, n_x)
            model = MipModel()
            xs = [model.add_variable(lb=float(v), ub=float(v)) for v in x]
            block = encode_parametric_qp_kkt(model, qp, xs, bg)
            model.objective = QuadObjective()
            sol = solve_milp(model)
            assert sol.status is MipStatus.OPTIMAL
            z_enc = np.array([sol.incumbent[v] for v in block.z_vars])
            ref = solve_qp(qp.P, qp.Q @ x + qp.q, F=qp.F, g=qp.G @ x + qp.g)
            assert np.allclose(z_enc, ref.z, atol=1e-6)


def test_bigM_scaling_does_not_change_solution():
    # the encoding must be insensitive to the constants as long as they
    # remain valid upper bounds
    rng = np.random.default_rng(11)
    qp = _random_box_qp(rng, 2, 1)
    box = (-np.ones(1), np.ones(1))
    bg = compute_bigM_bounds(qp, box)
    x = np.array([0.4])
    sols = []
    for factor in (1.0, 10.0):
        model = MipModel()
        xs = [model.add_variable(lb=float(v), ub=float(v)) for v in x]
        block = encode_parametric_qp_kkt(model, qp, xs, bg.scaled(factor))
        model.objective = QuadObjective()
        sol = solve_milp(model)
        assert sol.status is MipStatus.OPTIMAL
        sols.append(np.array([sol.incumbent[v] for v in block.z_vars]))
    assert np.allclose(sols[0], sols[1], atol=1e-6)


def test_absorbable_row_pinned():
    # equality z0 = x determines z0, so box rows on z0 never need
    # multiplier mass: stationarity moves it onto mu
    qp = ParametricQp(
        P=np.eye(2), Q=np.zeros((2, 1)), q=[0.0, -1.0],
        A=[[1.0, 0.0]], B=[[1.0]], b=[0.0],
        F=[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]],
        G=np.zeros((3, 1)), g=[2.0, 2.0, 0.5])
    box = (-np.ones(1), np.ones(1))
    bg = compute_bigM_bounds(qp, box, z_box=(np.array([-2.0, -2.0]),
                                             np.array([2.0, 2.0])))
    assert bg.M_dual[0] == 0.0 and bg.M_dual[1] == 0.0
    assert not bg.dual_fallback[:2].any()


def test_duplicate_row_pinned():
    # the second copy of a repeated half-space hands its multiplier to the
    # first, so its big-M collapses to zero
    qp = ParametricQp(
        P=[[1.0]], Q=[[0.0]], q=[-2.0],
        F=[[1.0], [2.0], [-1.0]], G=np.zeros((3, 1)),
        g=[1.0, 2.0, 1.0])
    bg = compute_bigM_bounds(qp, BOX0, z_box=(np.array([-1.0]), np.array([1.0])))
    assert bg.M_dual[1] == 0.0


def test_exclusive_pairs_detects_slab():
    qp = ParametricQp(
        P=[[1.0]], Q=[[0.0]], q=[0.0],
        F=[[1.0], [-2.0]], G=np.zeros((2, 1)), g=[1.0, 2.0])
    assert _exclusive_pairs(qp) == [(0, 1)]
    # touching slab (g_i + c g_j = 0) is excluded: both rows can be tight
    qp2 = ParametricQp(
        P=[[1.0]], Q=[[0.0]], q=[0.0],
        F=[[1.0], [-1.0]], G=np.zeros((2, 1)), g=[1.0, -1.0])
    assert _exclusive_pairs(qp2) == []


def test_support_budget_counts_free_directions():
    qp = _random_box_qp(np.random.default_rng(0), 3, 1)
    assert _support_budget(qp) == 3
    qp_eq = ParametricQp(
        P=np.eye(2), Q=np.zeros((2, 1)), q=[0.0, 0.0],
        A=[[1.0, 1.0]], B=[[0.0]], b=[0.0])
    assert _support_budget(qp_eq) == 1


def test_refine_tightens_unbounded_multiplier():
    # a redundant pair of rows that are tight together at a face creates a
    # multiplier ray in the LP relaxation; the complementarity pass caps it
    qp = ParametricQp(
        P=[[1.0]], Q=[[1.0]], q=[0.0],
        F=[[1.0], [-1.0]], G=np.zeros((2, 1)), g=[1.0, 1.0])
    box = (-np.ones(1) * 0.5, np.ones(1) * 0.5)
    bg = compute_bigM_bounds(qp, box, z_box=(np.array([-1.0]), np.array([1.0])),
                             refine=True)
    assert not bg.any_fallback()
    # stationarity: z + x + lam1 - lam2 = 0 with |z| <= 1, |x| <= 0.5
    assert bg.M_dual.max() <= 2.0 + 1e-3
