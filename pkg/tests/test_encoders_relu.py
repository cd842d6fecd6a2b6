import numpy as np
import pytest

from policert.encoders import (
    InvalidBounds,
    LayerBounds,
    ReluNetwork,
    compose,
    encode_relu_network,
    encode_saturation,
    propagate_bounds_interval,
    saturation_network,
    tighten_bounds_lp,
)
from policert.geometry import Polytope
from policert.mip import LinExpr, MipModel, ObjSense, QuadObjective
from policert.solver import MipStatus, solve_milp


def _abs_net():
    # |x| = relu(x) + relu(-x)
    return ReluNetwork(weights=[np.array([[1.0], [-1.0]]), np.array([[1.0, 1.0]])],
                       biases=[np.zeros(2), np.zeros(1)])


def _pin_and_solve(model, block, x):
    for v, val in zip(block.inputs, np.atleast_1d(x)):
        model.set_bounds(v, float(val), float(val))
    model.objective = QuadObjective()
    sol = solve_milp(model)
    assert sol.status is MipStatus.OPTIMAL
    return np.array([sol.incumbent[v] for v in block.outputs])


def test_interval_bounds_single_layer():
    net = ReluNetwork(weights=[np.array([[1.0, 1.0]])], biases=[np.zeros(1)])
    b = propagate_bounds_interval(net, ([-1, -1], [1, 1]))
    assert b.lower[0][0] == pytest.approx(-2.0)
    assert b.upper[0][0] == pytest.approx(2.0)


def test_interval_bounds_negative_weight():
    net = ReluNetwork(weights=[np.array([[-1.0]])], biases=[np.array([1.0])])
    b = propagate_bounds_interval(net, ([0.0], [2.0]))
    assert b.lower[0][0] == pytest.approx(-1.0)
    assert b.upper[0][0] == pytest.approx(1.0)


def test_interval_bounds_abs_net_second_layer():
    b = propagate_bounds_interval(_abs_net(), ([-1.0], [1.0]))
    assert b.lower[1][0] == pytest.approx(0.0)
    assert b.upper[1][0] == pytest.approx(2.0)


def test_lp_tightening_never_looser():
    rng = np.random.default_rng(7)
    net = ReluNetwork(
        weights=[rng.normal(size=(5, 2)), rng.normal(size=(4, 5)),
                 rng.normal(size=(1, 4))],
        biases=[rng.normal(size=5), rng.normal(size=4), rng.normal(size=1)])
    poly = Polytope.from_box([-1, -1], [1, 1])
    iv = propagate_bounds_interval(net, ([-1, -1], [1, 1]))
    tb = tighten_bounds_lp(net, poly, iv)
    for layer in range(net.num_layers):
        assert np.all(tb.lower[layer] >= iv.lower[layer] - 1e-9)
        assert np.all(tb.upper[layer] <= iv.upper[layer] + 1e-9)


def test_lp_tightening_uses_polytope():
    # on x in [0, 1] the relu(-x) neuron never fires; its upper bound is 0
    net = _abs_net()
    poly = Polytope.from_box([0.0], [1.0])
    iv = propagate_bounds_interval(net, ([0.0], [1.0]))
    tb = tighten_bounds_lp(net, poly, iv)
    assert tb.upper[0][1] <= 1e-9


def test_tightening_degenerate_polytope():
    net = _abs_net()
    poly = Polytope(np.array([[1.0], [-1.0]]), np.array([0.5, -0.5]))
    iv = propagate_bounds_interval(net, ([0.5], [0.5]))
    tb = tighten_bounds_lp(net, poly, iv)
    for layer in range(net.num_layers):
        assert np.all(tb.upper[layer] - tb.lower[layer] <= 2e-9)


def test_invalid_bounds_rejected():
    net = _abs_net()
    bad = LayerBounds(lower=[np.array([1.0, 1.0]), np.zeros(1)],
                      upper=[np.array([0.0, 0.0]), np.ones(1)])
    with pytest.raises(InvalidBounds):
        encode_relu_network(MipModel(), net, Polytope.from_box([-1], [1]), bad)


def test_encode_single_neuron_positive_and_negative():
    for x, want in ((0.5, 0.5), (-0.3, 0.0)):
        net = ReluNetwork(weights=[np.array([[1.0]])], biases=[np.zeros(1)],
                          final_affine=False)
        model = MipModel()
        poly = Polytope.from_box([-1], [1])
        b = propagate_bounds_interval(net, ([-1.0], [1.0]))
        block = encode_relu_network(model, net, poly, b)
        out = _pin_and_solve(model, block, x)
        assert out[0] == pytest.approx(want, abs=1e-8)


def test_encode_abs_net_maximum():
    model = MipModel()
    poly = Polytope.from_box([-1], [1])
    b = propagate_bounds_interval(_abs_net(), ([-1.0], [1.0]))
    block = encode_relu_network(model, _abs_net(), poly, b)
    model.objective = QuadObjective(linear=LinExpr({block.outputs[0]: 1.0}),
                                    sense=ObjSense.MAX)
    sol = solve_milp(model)
    assert sol.objective == pytest.approx(1.0, abs=1e-8)


def test_encode_matches_forward_on_samples():
    rng = np.random.default_rng(11)
    net = ReluNetwork(
        weights=[rng.normal(size=(6, 2)), rng.normal(size=(1, 6))],
        biases=[rng.normal(size=6), rng.normal(size=1)])
    poly = Polytope.from_box([-2, -2], [2, 2])
    b = propagate_bounds_interval(net, ([-2, -2], [2, 2]))
    for _ in range(10):
        x = rng.uniform(-2, 2, size=2)
        model = MipModel()
        block = encode_relu_network(model, net, poly, b)
        out = _pin_and_solve(model, block, x)
        assert np.max(np.abs(out - net.forward(x))) <= 1e-6


def test_saturation_values():
    net = saturation_network([0.0], [1.0])
    for x, want in ((1.7, 1.0), (0.4, 0.4), (-2.0, 0.0)):
        assert net.forward([x])[0] == pytest.approx(want, abs=1e-12)


def test_encode_saturation_block():
    model = MipModel()
    x = model.add_variable(lb=-3.0, ub=3.0)
    block = encode_saturation(model, [0.0], [1.0], [x])
    for val, want in ((1.7, 1.0), (0.4, 0.4), (-2.0, 0.0)):
        m2 = MipModel()
        x2 = m2.add_variable(lb=-3.0, ub=3.0)
        b2 = encode_saturation(m2, [0.0], [1.0], [x2])
        out = _pin_and_solve(m2, b2, val)
        assert out[0] == pytest.approx(want, abs=1e-8)
    assert len(block.outputs) == 1


def test_compose_relu_idempotent():
    net = ReluNetwork(weights=[np.array([[1.0]])], biases=[np.zeros(1)],
                      final_affine=False)
    model = MipModel()
    poly = Polytope.from_box([-1], [1])
    b = propagate_bounds_interval(net, ([-1.0], [1.0]))
    a = encode_relu_network(model, net, poly, b)
    b2 = encode_relu_network(model, net, Polytope.from_box([0], [1]),
                             propagate_bounds_interval(net, ([0.0], [1.0])))
    combined = compose(model, a, b2)
    out = _pin_and_solve(model, combined, 0.5)
    assert out[0] == pytest.approx(0.5, abs=1e-8)


def test_bound_validity_on_samples():
    rng = np.random.default_rng(4)
    net = ReluNetwork(
        weights=[rng.normal(size=(5, 3)), rng.normal(size=(2, 5))],
        biases=[rng.normal(size=5), rng.normal(size=2)])
    box = (np.full(3, -1.5), np.full(3, 1.5))
    b = propagate_bounds_interval(net, box)
    for _ in range(200):
        x = rng.uniform(box[0], box[1])
        z = x
        for i, (W, bias) in enumerate(zip(net.weights, net.biases)):
            pre = W @ z + bias
            assert np.all(pre >= b.lower[i] - 1e-9)
            assert np.all(pre <= b.upper[i] + 1e-9)
            z = np.maximum(pre, 0.0) if net._has_relu(i) else pre
