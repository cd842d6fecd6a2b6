"""ReLU network encoding with interval and LP bound propagation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import Polytope
from ..mip.model import LinExpr, MipModel, Sense, VarKind
from ..solver.lp import LpStatus, minimize_expr
from .blocks import EncodingError, GraphBlock


class InvalidBounds(EncodingError):
    pass


@dataclass
class ReluNetwork:
    """Fully connected feed-forward net: ReLU on every layer except,
    when ``final_affine`` is set, the last one."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    final_affine: bool = True

    def __post_init__(self):
        self.weights = [np.atleast_2d(np.asarray(W, dtype=float)) for W in self.weights]
        self.biases = [np.atleast_1d(np.asarray(b, dtype=float)) for b in self.biases]
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases count mismatch")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: bias dimension mismatch")
            if i > 0 and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dimension does not chain")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def _has_relu(self, layer: int) -> bool:
        return not (self.final_affine and layer == self.num_layers - 1)

    def forward(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = W @ z + b
            if self._has_relu(i):
                z = np.maximum(z, 0.0)
        return z


@dataclass
class LayerBounds:
    """Pre-activation bounds (lower, upper) per layer."""

    lower: List[np.ndarray]
    upper: List[np.ndarray]

    def validate(self) -> None:
        for lo, hi in zip(self.lower, self.upper):
            if np.any(lo > hi + 1e-12):
                raise InvalidBounds("lower bound above upper bound")


def propagate_bounds_interval(network: ReluNetwork, input_box) -> LayerBounds:
    """Sign-split interval arithmetic, layer by layer."""
    lo = np.atleast_1d(np.asarray(input_box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(input_box[1], dtype=float))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("input box must be finite")
    lowers, uppers = [], []
    for i, (W, b) in enumerate(zip(network.weights, network.biases)):
        Wp, Wm = np.maximum(W, 0.0), np.minimum(W, 0.0)
        pre_lo = Wp @ lo + Wm @ hi + b
        pre_hi = Wp @ hi + Wm @ lo + b
        lowers.append(pre_lo)
        uppers.append(pre_hi)
        if network._has_relu(i):
            lo, hi = np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
        else:
            lo, hi = pre_lo, pre_hi
    return LayerBounds(lowers, uppers)


def tighten_bounds_lp(
    network: ReluNetwork,
    input_polytope: Polytope,
    initial_bounds: LayerBounds,
) -> LayerBounds:
    """Per-neuron min/max LPs over the relaxed encoding of earlier layers.

    Returned bounds are the intersection with the initial ones, so they are
    never looser. LP failures fall back to the initial bound for that neuron.
    """
    initial_bounds.validate()
    model = MipModel("bound-tightening")
    box_lo, box_hi = input_polytope.bounding_box()
    xs = [model.add_variable(lb=float(l), ub=float(h)) for l, h in zip(box_lo, box_hi)]
    _add_polytope_rows(model, input_polytope, xs)

    prev = xs
    lowers, uppers = [], []
    for i, (W, b) in enumerate(zip(network.weights, network.biases)):
        n_out = W.shape[0]
        lo_i = initial_bounds.lower[i].copy()
        hi_i = initial_bounds.upper[i].copy()
        for j in range(n_out):
            expr = LinExpr(constant=float(b[j]))
            for kk, coef in enumerate(W[j]):
                if coef != 0.0:
                    expr.add_term(prev[kk], float(coef))
            rmin = minimize_expr(model, expr)
            rmax = minimize_expr(model, expr, maximize=True)
            if rmin.status is LpStatus.OPTIMAL:
                lo_i[j] = max(lo_i[j], rmin.objective)
            if rmax.status is LpStatus.OPTIMAL:
                hi_i[j] = min(hi_i[j], rmax.objective)
            if lo_i[j] > hi_i[j]:  # numerical crossing on degenerate inputs
                mid = 0.5 * (lo_i[j] + hi_i[j])
                lo_i[j] = hi_i[j] = mid
        lowers.append(lo_i)
        uppers.append(hi_i)
        if network._has_relu(i):
            prev = _add_relaxed_layer(model, prev, W, b, lo_i, hi_i)
        else:
            prev = _add_affine_layer(model, prev, W, b, lo_i, hi_i)
    return LayerBounds(lowers, uppers)


def _add_polytope_rows(model: MipModel, polytope: Polytope, xs) -> None:
    for row, rhs in zip(polytope.C, polytope.d):
        expr = LinExpr()
        for v, coef in zip(xs, row):
            if coef != 0.0:
                expr.add_term(v, float(coef))
        model.add_linear(expr, Sense.LE, float(rhs))


def _pre_expr(prev, W, b, j) -> LinExpr:
    expr = LinExpr(constant=float(b[j]))
    for kk, coef in enumerate(W[j]):
        if coef != 0.0:
            expr.add_term(prev[kk], float(coef))
    return expr


def _add_affine_layer(model, prev, W, b, lo, hi):
    out = []
    for j in range(W.shape[0]):
        v = model.add_variable(lb=float(lo[j]), ub=float(hi[j]))
        expr = _pre_expr(prev, W, b, j)
        expr.add_term(v, -1.0)
        model.add_linear(expr, Sense.EQ, 0.0)
        out.append(v)
    return out


def _relu_rows(model, pre: LinExpr, z, beta, m_lo: float, m_hi: float) -> None:
    """Exact big-M rows for z = max(0, pre) with pre in [m_lo, m_hi]."""
    # z >= pre
    e = pre.copy()
    e.add_term(z, -1.0)
    model.add_linear(e, Sense.LE, 0.0)
    # z <= pre - m_lo (1 - beta)
    e = LinExpr({z: 1.0}, constant=0.0)
    for v, c in pre.terms.items():
        e.add_term(v, -c)
    e.add_term(beta, -m_lo)
    model.add_linear(e, Sense.LE, pre.constant - m_lo)
    # z <= m_hi beta
    model.add_linear(LinExpr({z: 1.0, beta: -m_hi}), Sense.LE, 0.0)


def _add_relaxed_layer(model, prev, W, b, lo, hi):
    """ReLU layer with binaries relaxed to [0, 1] (LP tightening only)."""
    return _add_relu_layer(model, prev, W, b, lo, hi, relaxed=True)[0]


def _add_relu_layer(model, prev, W, b, lo, hi, relaxed=False):
    out, internals = [], []
    for j in range(W.shape[0]):
        m_lo, m_hi = float(lo[j]), float(hi[j])
        pre = _pre_expr(prev, W, b, j)
        if m_hi <= 0.0:
            z = model.add_variable(lb=0.0, ub=0.0)  # provably inactive
            out.append(z)
            continue
        if m_lo >= 0.0:
            # provably active: z equals the pre-activation
            z = model.add_variable(lb=m_lo, ub=m_hi)
            e = pre.copy()
            e.add_term(z, -1.0)
            model.add_linear(e, Sense.EQ, 0.0)
            out.append(z)
            continue
        z = model.add_variable(lb=0.0, ub=max(m_hi, 0.0))
        if relaxed:
            beta = model.add_variable(lb=0.0, ub=1.0)
        else:
            beta = model.add_variable(VarKind.BINARY)
        internals.append(beta)
        _relu_rows(model, pre, z, beta, m_lo, m_hi)
        out.append(z)
    return out, internals


def encode_relu_network(
    model: MipModel,
    network: ReluNetwork,
    input_polytope: Polytope,
    bounds: LayerBounds,
    input_vars: Optional[Sequence[int]] = None,
) -> GraphBlock:
    """Append the big-M graph of the network to the model.

    When ``input_vars`` is given those variables are used as the network
    input (their bounds are assumed set); otherwise fresh input variables
    constrained to the polytope are created.
    """
    bounds.validate()
    internals: List[int] = []
    if input_vars is None:
        lo, hi = input_polytope.bounding_box()
        xs = [model.add_variable(lb=float(l), ub=float(h)) for l, h in zip(lo, hi)]
        _add_polytope_rows(model, input_polytope, xs)
    else:
        xs = list(input_vars)
        if len(xs) != network.input_dim:
            raise EncodingError("input variable count mismatch")

    prev = xs
    for i, (W, b) in enumerate(zip(network.weights, network.biases)):
        lo_i, hi_i = bounds.lower[i], bounds.upper[i]
        if network._has_relu(i):
            prev, betas = _add_relu_layer(model, prev, W, b, lo_i, hi_i)
            internals.extend(betas)
        else:
            prev = _add_affine_layer(model, prev, W, b, lo_i, hi_i)
        if i < network.num_layers - 1:
            internals.extend(prev)
    outputs = prev
    block = GraphBlock(xs, list(outputs), internals)
    block.check_disjoint()
    return block


def saturation_network(lb, ub) -> ReluNetwork:
    """The clip-to-box map as a two-ReLU network:
    sat(x) = ub - relu(ub - (relu(x - lb) + lb))."""
    lb = np.atleast_1d(np.asarray(lb, dtype=float))
    ub = np.atleast_1d(np.asarray(ub, dtype=float))
    if np.any(lb > ub):
        raise ValueError("saturation bounds inverted")
    m = lb.size
    eye = np.eye(m)
    return ReluNetwork(
        weights=[eye, -eye, -eye],
        biases=[-lb, ub - lb, ub],
        final_affine=True,
    )


def encode_saturation(
    model: MipModel,
    lb,
    ub,
    input_vars: Sequence[int],
    input_box: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> GraphBlock:
    """Box clipping of the given variables, built from the two-ReLU identity."""
    net = saturation_network(lb, ub)
    if input_box is None:
        vlo = np.array([model.variables[v].lb for v in input_vars])
        vhi = np.array([model.variables[v].ub for v in input_vars])
    else:
        vlo, vhi = np.asarray(input_box[0], float), np.asarray(input_box[1], float)
    if not (np.all(np.isfinite(vlo)) and np.all(np.isfinite(vhi))):
        raise EncodingError("saturation inputs need finite bounds")
    bounds = propagate_bounds_interval(net, (vlo, vhi))
    poly = Polytope.from_box(vlo, vhi)
    return encode_relu_network(model, net, poly, bounds, input_vars=input_vars)
