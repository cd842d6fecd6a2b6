"""JSON spec files for the front ends.

Three document kinds share one loader: controller specs ({"type": "mpc"} or
{"type": "tube_mpc"}), policy documents (anything policy_from_dict accepts,
optionally wrapped in {"schema_version", "policy"}), and polytopes (either
half-space form {"C", "d"} or a box {"lb", "ub"}).
"""

from __future__ import annotations

import json
from typing import Optional, Tuple

import numpy as np

from .control import LinearSystem, MpcSpec, TubeMpcSpec, build_tube_mpc, condense_mpc
from .geometry import Polytope
from .policies import Policy, QpPolicy, policy_from_dict

SCHEMA_VERSION = 1


class SpecFormatError(Exception):
    """A spec file failed to parse or validate."""


def _matrix(d: dict, key: str, required: bool = True) -> Optional[np.ndarray]:
    if key not in d or d[key] is None:
        if required:
            raise SpecFormatError(f"missing field {key!r}")
        return None
    return np.asarray(d[key], dtype=float)


def polytope_from_dict(d: dict) -> Polytope:
    if "C" in d and "d" in d:
        return Polytope.from_json_dict(d)
    if "lb" in d and "ub" in d:
        return Polytope.from_box(np.atleast_1d(_matrix(d, "lb")),
                                 np.atleast_1d(_matrix(d, "ub")))
    raise SpecFormatError("polytope needs either C/d rows or lb/ub box")


def mpc_from_dict(d: dict) -> MpcSpec:
    sys = LinearSystem(_matrix(d, "A"), _matrix(d, "B"))
    spec = MpcSpec(
        system=sys,
        N=int(d.get("N", 10)),
        Q=_matrix(d, "Q"),
        R=_matrix(d, "R"),
        X=polytope_from_dict(d["X"]),
        U=polytope_from_dict(d["U"]),
        P_terminal=_matrix(d, "P_terminal", required=False),
        X_N=polytope_from_dict(d["X_N"]) if d.get("X_N") else None,
        x_eq=_matrix(d, "x_eq", required=False),
        u_eq=_matrix(d, "u_eq", required=False),
        auto_terminal_set=bool(d.get("auto_terminal_set", True)),
    )
    return spec


def tube_from_dict(d: dict) -> TubeMpcSpec:
    return TubeMpcSpec(
        base=mpc_from_dict(d),
        W=polytope_from_dict(d["W"]),
        K=_matrix(d, "K", required=False),
        rpi_eps=float(d.get("rpi_eps", 1e-3)),
    )


def policy_from_spec(d: dict) -> Policy:
    """Build a policy from any supported document.

    Controller specs are condensed and wrapped as their exact KKT-encoded
    solution maps; everything else goes through the policy registry.
    """
    if isinstance(d, dict) and "policy" in d:
        d = d["policy"]
    kind = d.get("type")
    if kind == "mpc":
        cq = condense_mpc(mpc_from_dict(d))
        return QpPolicy(cq.qp, output_map=cq.u0_map, z_box=cq.z_box)
    if kind == "tube_mpc":
        asm = build_tube_mpc(tube_from_dict(d))
        return QpPolicy(asm.condensed.qp, output_map=asm.output_map,
                        z_box=asm.condensed.z_box, feedthrough=asm.feedthrough)
    return policy_from_dict(d)


def load_json(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise SpecFormatError(f"no such file: {path}")
    except json.JSONDecodeError as e:
        raise SpecFormatError(
            f"{path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}")


def load_policy_spec(path: str) -> Policy:
    d = load_json(path)
    try:
        return policy_from_spec(d)
    except (KeyError, ValueError) as e:
        raise SpecFormatError(f"{path}: {e}")


def load_mpc_spec(path: str) -> MpcSpec:
    d = load_json(path)
    if isinstance(d, dict) and "policy" in d:
        d = d["policy"]
    if d.get("type") != "mpc":
        raise SpecFormatError(f"{path}: expected an mpc spec, got {d.get('type')!r}")
    try:
        return mpc_from_dict(d)
    except (KeyError, ValueError) as e:
        raise SpecFormatError(f"{path}: {e}")


def load_polytope(path: str) -> Polytope:
    d = load_json(path)
    try:
        return polytope_from_dict(d)
    except (KeyError, ValueError) as e:
        raise SpecFormatError(f"{path}: {e}")


def mpc_to_dict(spec: MpcSpec) -> dict:
    d = {
        "type": "mpc",
        "A": spec.system.A.tolist(),
        "B": spec.system.B.tolist(),
        "Q": spec.Q.tolist(),
        "R": spec.R.tolist(),
        "N": spec.N,
        "X": spec.X.to_json_dict(),
        "U": spec.U.to_json_dict(),
        "x_eq": spec.x_eq.tolist(),
        "u_eq": spec.u_eq.tolist(),
        "auto_terminal_set": spec.auto_terminal_set,
    }
    if spec.P_terminal is not None:
        d["P_terminal"] = np.atleast_2d(spec.P_terminal).tolist()
    if spec.X_N is not None:
        d["X_N"] = spec.X_N.to_json_dict()
    return d
