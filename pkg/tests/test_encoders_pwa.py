import numpy as np
import pytest

from policert.encoders import (
    NoRegionFound,
    PwaFunction,
    PwaRegion,
    UnboundedRegion,
    encode_pwa,
)
from policert.encoders.pwa import check_continuity_sampled
from policert.mip import LinExpr, MipModel, ObjSense, QuadObjective
from policert.solver import MipStatus, solve_milp


def _abs_pwa():
    # |x| on [-1, 1] as two pieces
    left = PwaRegion(F=[[1.0], [-1.0]], g=[0.0, 1.0], A=[[-1.0]], c=[0.0])
    right = PwaRegion(F=[[1.0], [-1.0]], g=[1.0, 0.0], A=[[1.0]], c=[0.0])
    return PwaFunction([left, right])


def _pin_and_solve(model, block, x):
    for v, val in zip(block.inputs, np.atleast_1d(x)):
        model.set_bounds(v, float(val), float(val))
    model.objective = QuadObjective()
    sol = solve_milp(model)
    assert sol.status is MipStatus.OPTIMAL
    return np.array([sol.incumbent[v] for v in block.outputs])


def test_pwa_evaluate_interior():
    model = MipModel()
    block = encode_pwa(model, _abs_pwa())
    out = _pin_and_solve(model, block, -0.5)
    assert out[0] == pytest.approx(0.5, abs=1e-8)


def test_pwa_shared_facet():
    model = MipModel()
    block = encode_pwa(model, _abs_pwa())
    out = _pin_and_solve(model, block, 0.0)
    assert out[0] == pytest.approx(0.0, abs=1e-8)


def test_pwa_max_matches_vertex_enumeration():
    rng = np.random.default_rng(5)
    breaks = np.sort(np.concatenate([[-1.0, 1.0], rng.uniform(-1, 1, 2)]))
    slopes = rng.normal(size=3)
    # continuous piecewise-linear function built left to right
    offsets = [float(rng.normal())]
    for k in range(1, 3):
        offsets.append(offsets[-1] + (slopes[k - 1] - slopes[k]) * breaks[k])
    regions = [
        PwaRegion(F=[[1.0], [-1.0]], g=[breaks[k + 1], -breaks[k]],
                  A=[[slopes[k]]], c=[offsets[k]])
        for k in range(3)
    ]
    pwa = PwaFunction(regions)
    model = MipModel()
    block = encode_pwa(model, pwa)
    model.objective = QuadObjective(linear=LinExpr({block.outputs[0]: 1.0}),
                                    sense=ObjSense.MAX)
    sol = solve_milp(model)
    ref = max(pwa.evaluate([b])[0] for b in breaks)
    assert sol.objective == pytest.approx(ref, abs=1e-8)


def test_pwa_unbounded_region_rejected():
    region = PwaRegion(F=[[1.0]], g=[1.0], A=[[1.0]], c=[0.0])
    with pytest.raises(UnboundedRegion):
        encode_pwa(MipModel(), PwaFunction([region]))


def test_pwa_no_region_found():
    with pytest.raises(NoRegionFound):
        _abs_pwa().evaluate([5.0])


def test_continuity_check_passes_for_abs():
    assert check_continuity_sampled(_abs_pwa())


def test_continuity_check_flags_jump():
    left = PwaRegion(F=[[1.0], [-1.0]], g=[0.0, 1.0], A=[[0.0]], c=[0.0])
    right = PwaRegion(F=[[1.0], [-1.0]], g=[1.0, 0.0], A=[[0.0]], c=[1.0])
    with pytest.warns(UserWarning):
        ok = check_continuity_sampled(PwaFunction([left, right]))
    assert not ok
