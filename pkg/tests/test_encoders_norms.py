import numpy as np
import pytest

from policert.encoders import encode_inf_norm, encode_one_norm
from policert.mip import MipModel, QuadObjective
from policert.solver import MipStatus, solve_milp


def _eval_norm(encoder, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    model = MipModel()
    box = (np.minimum(t, -np.abs(t)) - 1.0, np.maximum(t, np.abs(t)) + 1.0)
    ts = [model.add_variable(lb=float(v), ub=float(v)) for v in t]
    block = encoder(model, ts, box)
    model.objective = QuadObjective()
    sol = solve_milp(model)
    assert sol.status is MipStatus.OPTIMAL
    return sol.incumbent[block.outputs[0]]


def test_inf_norm_basic():
    assert _eval_norm(encode_inf_norm, [0.3, -0.7]) == pytest.approx(0.7, abs=1e-9)


def test_inf_norm_zero():
    assert _eval_norm(encode_inf_norm, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-9)


def test_one_norm_basic():
    assert _eval_norm(encode_one_norm, [0.3, -0.7]) == pytest.approx(1.0, abs=1e-9)


def test_one_norm_zero():
    assert _eval_norm(encode_one_norm, [0.0]) == pytest.approx(0.0, abs=1e-9)


def test_norms_match_oracle_random():
    rng = np.random.default_rng(12)
    for _ in range(60):
        t = rng.uniform(-3, 3, size=rng.integers(1, 5))
        assert _eval_norm(encode_inf_norm, t) == pytest.approx(
            np.max(np.abs(t)), abs=1e-9)
        assert _eval_norm(encode_one_norm, t) == pytest.approx(
            np.sum(np.abs(t)), abs=1e-9)
