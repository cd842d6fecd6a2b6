"""Policy specifications: the JSON-facing layer over the encoders.

A policy is a MILP-representable map u = psi(x). Every concrete kind knows
how to evaluate itself (the reference forward pass) and how to append its
graph to a model. Matrices serialize as dense row-major lists of floats.
"""

from __future__ import annotations

import json
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .encoders import (
    GraphBlock,
    ParametricQp,
    PwaFunction,
    PwaRegion,
    ReluNetwork,
    compose,
    compute_bigM_bounds,
    encode_parametric_qp_kkt,
    encode_pwa,
    encode_relu_network,
    encode_saturation,
    propagate_bounds_interval,
    tighten_bounds_lp,
)
from .geometry import Polytope
from .mip.model import MipModel
from .qp_oracle import solve_qp

SCHEMA_VERSION = 1


class PolicyFormatError(Exception):
    pass


def _mat(data) -> np.ndarray:
    return np.array(data, dtype=float)


class Policy:
    """Base interface; see the concrete kinds below."""

    type_name = "abstract"

    @property
    def input_dim(self) -> int:
        raise NotImplementedError

    @property
    def output_dim(self) -> int:
        raise NotImplementedError

    def forward(self, x) -> np.ndarray:
        raise NotImplementedError

    def output_box(self, input_box) -> Tuple[np.ndarray, np.ndarray]:
        """A finite box containing psi(x) for every x in the input box."""
        raise NotImplementedError

    def encode(self, model: MipModel, input_vars: Sequence[int], input_box,
               tighten: bool = False) -> GraphBlock:
        raise NotImplementedError

    def to_json_dict(self) -> dict:
        raise NotImplementedError


class ReluPolicy(Policy):
    type_name = "relu_network"

    def __init__(self, network: ReluNetwork):
        self.network = network

    @property
    def input_dim(self) -> int:
        return self.network.input_dim

    @property
    def output_dim(self) -> int:
        return self.network.output_dim

    def forward(self, x) -> np.ndarray:
        return self.network.forward(x)

    def output_box(self, input_box):
        bounds = propagate_bounds_interval(self.network, input_box)
        lo, hi = bounds.lower[-1], bounds.upper[-1]
        if self.network._has_relu(self.network.num_layers - 1):
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        return lo, hi

    def encode(self, model, input_vars, input_box, tighten=False):
        bounds = propagate_bounds_interval(self.network, input_box)
        poly = Polytope.from_box(*input_box)
        if tighten:
            bounds = tighten_bounds_lp(self.network, poly, bounds)
        return encode_relu_network(model, self.network, poly, bounds,
                                   input_vars=list(input_vars))

    def to_json_dict(self) -> dict:
        return {
            "type": self.type_name,
            "weights": [W.tolist() for W in self.network.weights],
            "biases": [b.tolist() for b in self.network.biases],
            "final_affine": self.network.final_affine,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ReluPolicy":
        net = ReluNetwork(
            [_mat(W) for W in d["weights"]],
            [_mat(b) for b in d["biases"]],
            bool(d.get("final_affine", True)),
        )
        return ReluPolicy(net)


class SaturationPolicy(Policy):
    type_name = "saturation"

    def __init__(self, lb, ub):
        self.lb = np.atleast_1d(_mat(lb))
        self.ub = np.atleast_1d(_mat(ub))
        if np.any(self.lb > self.ub):
            raise PolicyFormatError("saturation bounds inverted")

    @property
    def input_dim(self) -> int:
        return self.lb.size

    @property
    def output_dim(self) -> int:
        return self.lb.size

    def forward(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lb, self.ub)

    def output_box(self, input_box):
        lo = np.clip(np.asarray(input_box[0], float), self.lb, self.ub)
        hi = np.clip(np.asarray(input_box[1], float), self.lb, self.ub)
        return lo, hi

    def encode(self, model, input_vars, input_box, tighten=False):
        return encode_saturation(model, self.lb, self.ub, list(input_vars),
                                 input_box=input_box)

    def to_json_dict(self) -> dict:
        return {"type": self.type_name, "lb": self.lb.tolist(), "ub": self.ub.tolist()}

    @staticmethod
    def from_json_dict(d: dict) -> "SaturationPolicy":
        return SaturationPolicy(_mat(d["lb"]), _mat(d["ub"]))


class PwaPolicy(Policy):
    type_name = "pwa"

    def __init__(self, pwa: PwaFunction):
        self.pwa = pwa

    @property
    def input_dim(self) -> int:
        return self.pwa.input_dim

    @property
    def output_dim(self) -> int:
        return self.pwa.output_dim

    def forward(self, x) -> np.ndarray:
        return self.pwa.evaluate(x)

    def output_box(self, input_box):
        lo = np.full(self.output_dim, np.inf)
        hi = np.full(self.output_dim, -np.inf)
        for region in self.pwa.regions:
            rlo, rhi = region.polytope.bounding_box()
            Ap, Am = np.maximum(region.A, 0.0), np.minimum(region.A, 0.0)
            lo = np.minimum(lo, Ap @ rlo + Am @ rhi + region.c)
            hi = np.maximum(hi, Ap @ rhi + Am @ rlo + region.c)
        return lo, hi

    def encode(self, model, input_vars, input_box, tighten=False):
        return encode_pwa(model, self.pwa, input_vars=list(input_vars))

    def to_json_dict(self) -> dict:
        return {
            "type": self.type_name,
            "regions": [
                {"F": r.F.tolist(), "g": r.g.tolist(),
                 "A": r.A.tolist(), "c": r.c.tolist()}
                for r in self.pwa.regions
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "PwaPolicy":
        regions = [PwaRegion(_mat(r["F"]), _mat(r["g"]), _mat(r["A"]), _mat(r["c"]))
                   for r in d["regions"]]
        return PwaPolicy(PwaFunction(regions))


class QpPolicy(Policy):
    """Solution map of a parametric QP, post-composed with an affine output map.

    u = output_map @ z*(x) + feedthrough @ x + offset. The feedthrough path
    covers control laws like tube MPC's u = K(x - z0) + v0.
    """

    type_name = "parametric_qp"

    def __init__(self, qp: ParametricQp, output_map: Optional[np.ndarray] = None,
                 z_box=None, feedthrough: Optional[np.ndarray] = None,
                 offset: Optional[np.ndarray] = None):
        self.qp = qp
        if output_map is None:
            output_map = np.eye(qp.n_z)
        self.output_map = np.atleast_2d(_mat(output_map))
        n_u = self.output_map.shape[0]
        if feedthrough is None:
            feedthrough = np.zeros((n_u, qp.n_x))
        self.feedthrough = np.atleast_2d(_mat(feedthrough)).reshape(n_u, qp.n_x)
        self.offset = np.zeros(n_u) if offset is None else np.atleast_1d(_mat(offset))
        self.z_box = None
        if z_box is not None:
            self.z_box = (np.atleast_1d(_mat(z_box[0])), np.atleast_1d(_mat(z_box[1])))
        self._bigM_cache: Dict[Tuple, object] = {}

    @property
    def input_dim(self) -> int:
        return self.qp.n_x

    @property
    def output_dim(self) -> int:
        return self.output_map.shape[0]

    def solve(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return solve_qp(self.qp.P, self.qp.Q @ x + self.qp.q,
                        A=self.qp.A if self.qp.n_eq else None,
                        b=self.qp.B @ x + self.qp.b if self.qp.n_eq else None,
                        F=self.qp.F if self.qp.n_ineq else None,
                        g=self.qp.G @ x + self.qp.g if self.qp.n_ineq else None)

    def forward(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        sol = self.solve(x)
        return self.output_map @ sol.z + self.feedthrough @ x + self.offset

    def big_m(self, input_box, timeout: float = np.inf):
        key = (tuple(np.asarray(input_box[0], float).ravel()),
               tuple(np.asarray(input_box[1], float).ravel()))
        if key not in self._bigM_cache:
            self._bigM_cache[key] = compute_bigM_bounds(
                self.qp, input_box, timeout=timeout, z_box=self.z_box)
        return self._bigM_cache[key]

    def output_box(self, input_box):
        bm = self.big_m(input_box)
        Mp = np.maximum(self.output_map, 0.0)
        Mm = np.minimum(self.output_map, 0.0)
        lo = Mp @ bm.z_lower + Mm @ bm.z_upper
        hi = Mp @ bm.z_upper + Mm @ bm.z_lower
        xlo = np.atleast_1d(np.asarray(input_box[0], float))
        xhi = np.atleast_1d(np.asarray(input_box[1], float))
        Dp, Dm = np.maximum(self.feedthrough, 0.0), np.minimum(self.feedthrough, 0.0)
        return (lo + Dp @ xlo + Dm @ xhi + self.offset,
                hi + Dp @ xhi + Dm @ xlo + self.offset)

    def encode(self, model, input_vars, input_box, tighten=False):
        from .mip.model import LinExpr, Sense

        bm = self.big_m(input_box)
        block = encode_parametric_qp_kkt(model, self.qp, list(input_vars), bm,
                                         output_map=self.output_map)
        if np.any(self.feedthrough != 0.0) or np.any(self.offset != 0.0):
            # rebuild outputs as u = M z + D x + offset
            new_outputs = []
            for r, u_old in enumerate(block.outputs):
                u = model.add_variable()
                e = LinExpr({u: -1.0, u_old: 1.0}, constant=float(self.offset[r]))
                for v, c in zip(block.inputs, self.feedthrough[r]):
                    if c != 0.0:
                        e.add_term(v, float(c))
                model.add_linear(e, Sense.EQ, 0.0, "qp-feedthrough")
                new_outputs.append(u)
            block.internals = block.internals + list(block.outputs)
            block.outputs = new_outputs
        return block

    def to_json_dict(self) -> dict:
        d = {
            "type": self.type_name,
            "P": self.qp.P.tolist(), "Q": self.qp.Q.tolist(), "q": self.qp.q.tolist(),
            "A": self.qp.A.tolist(), "B": self.qp.B.tolist(), "b": self.qp.b.tolist(),
            "F": self.qp.F.tolist(), "G": self.qp.G.tolist(), "g": self.qp.g.tolist(),
            "output_map": self.output_map.tolist(),
        }
        if np.any(self.feedthrough != 0.0):
            d["feedthrough"] = self.feedthrough.tolist()
        if np.any(self.offset != 0.0):
            d["offset"] = self.offset.tolist()
        if self.z_box is not None:
            d["z_box"] = [self.z_box[0].tolist(), self.z_box[1].tolist()]
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "QpPolicy":
        qp = ParametricQp(
            P=_mat(d["P"]), Q=_mat(d["Q"]), q=_mat(d["q"]),
            A=_mat(d["A"]) if len(d.get("A", [])) else None,
            B=_mat(d["B"]) if len(d.get("A", [])) else None,
            b=_mat(d["b"]) if len(d.get("A", [])) else None,
            F=_mat(d["F"]) if len(d.get("F", [])) else None,
            G=_mat(d["G"]) if len(d.get("F", [])) else None,
            g=_mat(d["g"]) if len(d.get("F", [])) else None,
        )
        z_box = d.get("z_box")
        if z_box is not None:
            z_box = (_mat(z_box[0]), _mat(z_box[1]))
        return QpPolicy(
            qp, output_map=_mat(d["output_map"]), z_box=z_box,
            feedthrough=_mat(d["feedthrough"]) if "feedthrough" in d else None,
            offset=_mat(d["offset"]) if "offset" in d else None,
        )


class CompositionPolicy(Policy):
    """Left-to-right chain: stages[0] runs first."""

    type_name = "composition"

    def __init__(self, stages: List[Policy]):
        if not stages:
            raise PolicyFormatError("composition needs at least one stage")
        for a, b in zip(stages, stages[1:]):
            if a.output_dim != b.input_dim:
                raise PolicyFormatError("composition stage dimensions do not chain")
        self.stages = stages

    @property
    def input_dim(self) -> int:
        return self.stages[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.stages[-1].output_dim

    def forward(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float)
        for stage in self.stages:
            z = stage.forward(z)
        return z

    def output_box(self, input_box):
        box = input_box
        for stage in self.stages:
            box = stage.output_box(box)
        return box

    def encode(self, model, input_vars, input_box, tighten=False):
        box = input_box
        block = None
        for stage in self.stages:
            if block is None:
                block = stage.encode(model, list(input_vars), box, tighten=tighten)
            else:
                nxt_inputs = [
                    model.add_variable(lb=float(l), ub=float(h))
                    for l, h in zip(*box)
                ]
                nxt = stage.encode(model, nxt_inputs, box, tighten=tighten)
                block = compose(model, block, nxt)
            box = stage.output_box(box)
        return block

    def to_json_dict(self) -> dict:
        return {"type": self.type_name,
                "stages": [s.to_json_dict() for s in self.stages]}

    @staticmethod
    def from_json_dict(d: dict) -> "CompositionPolicy":
        return CompositionPolicy([policy_from_dict(s) for s in d["stages"]])


_KINDS = {
    ReluPolicy.type_name: ReluPolicy,
    SaturationPolicy.type_name: SaturationPolicy,
    PwaPolicy.type_name: PwaPolicy,
    QpPolicy.type_name: QpPolicy,
    CompositionPolicy.type_name: CompositionPolicy,
}


def policy_from_dict(d: dict) -> Policy:
    kind = d.get("type")
    if kind not in _KINDS:
        raise PolicyFormatError(f"unknown policy type {kind!r}")
    return _KINDS[kind].from_json_dict(d)


def load_policy(path: str) -> Policy:
    with open(path) as f:
        data = json.load(f)
    if isinstance(data, dict) and "policy" in data:
        data = data["policy"]
    return policy_from_dict(data)


def save_policy(policy: Policy, path: str) -> None:
    with open(path, "w") as f:
        json.dump({"schema_version": SCHEMA_VERSION,
                   "policy": policy.to_json_dict()}, f, indent=2)
        f.write("\n")
