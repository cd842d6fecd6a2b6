"""Mixed-integer graphs of the 1-norm and infinity-norm."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from ..mip.model import LinExpr, MipModel, Sense, VarKind
from .blocks import EncodingError, GraphBlock


def _abs_vars(model: MipModel, t_vars: Sequence[int], t_box) -> Tuple[List[int], List[int]]:
    """z_i = |t_i| via one binary per coordinate.

    With B_i = max(|lo_i|, |hi_i|) the rows
        t_i <= z_i <= t_i + 2 B_i beta_i
       -t_i <= z_i <= -t_i + 2 B_i (1 - beta_i)
    force z_i = t_i when beta_i = 0 and z_i = -t_i when beta_i = 1, and are
    satisfiable exactly for the sign matching t_i.
    """
    lo = np.atleast_1d(np.asarray(t_box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(t_box[1], dtype=float))
    if lo.size != len(t_vars):
        raise EncodingError("box dimension mismatch")
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
        raise EncodingError("norm inputs need a finite box")
    zs, betas = [], []
    for t, l, h in zip(t_vars, lo, hi):
        B = max(abs(l), abs(h))
        z = model.add_variable(lb=0.0, ub=B)
        beta = model.add_variable(VarKind.BINARY)
        # t <= z
        model.add_linear(LinExpr({t: 1.0, z: -1.0}), Sense.LE, 0.0)
        # z <= t + 2B beta
        model.add_linear(LinExpr({z: 1.0, t: -1.0, beta: -2.0 * B}), Sense.LE, 0.0)
        # -t <= z
        model.add_linear(LinExpr({t: -1.0, z: -1.0}), Sense.LE, 0.0)
        # z <= -t + 2B (1 - beta)
        model.add_linear(LinExpr({z: 1.0, t: 1.0, beta: 2.0 * B}), Sense.LE, 2.0 * B)
        zs.append(z)
        betas.append(beta)
    return zs, betas


def encode_one_norm(model: MipModel, t_vars: Sequence[int], t_box) -> GraphBlock:
    """tau = sum |t_i|; output is the single tau variable."""
    zs, betas = _abs_vars(model, t_vars, t_box)
    lo = np.atleast_1d(np.asarray(t_box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(t_box[1], dtype=float))
    cap = float(np.sum(np.maximum(np.abs(lo), np.abs(hi))))
    tau = model.add_variable(lb=0.0, ub=cap)
    e = LinExpr({tau: -1.0})
    for z in zs:
        e.add_term(z, 1.0)
    model.add_linear(e, Sense.EQ, 0.0, "one-norm")
    block = GraphBlock(list(t_vars), [tau], zs + betas)
    block.check_disjoint()
    return block


def encode_inf_norm(model: MipModel, t_vars: Sequence[int], t_box) -> GraphBlock:
    """tau = max |t_i| via selector binaries on top of the absolute values.

    tau >= z_i for all i; the selector copies one z into tau:
    sum beta~ = 1, tau = sum z~_i, 0 <= z~_i <= B_i beta~_i, z~_i <= z_i.
    """
    zs, betas = _abs_vars(model, t_vars, t_box)
    lo = np.atleast_1d(np.asarray(t_box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(t_box[1], dtype=float))
    caps = np.maximum(np.abs(lo), np.abs(hi))
    tau = model.add_variable(lb=0.0, ub=float(caps.max(initial=0.0)))
    selectors, copies = [], []
    for z, B in zip(zs, caps):
        sel = model.add_variable(VarKind.BINARY)
        zt = model.add_variable(lb=0.0, ub=float(B))
        model.add_linear(LinExpr({zt: 1.0, sel: -float(B)}), Sense.LE, 0.0)
        model.add_linear(LinExpr({zt: 1.0, z: -1.0}), Sense.LE, 0.0)
        # tau dominates every coordinate
        model.add_linear(LinExpr({z: 1.0, tau: -1.0}), Sense.LE, 0.0)
        selectors.append(sel)
        copies.append(zt)
    model.add_linear(LinExpr({s: 1.0 for s in selectors}), Sense.EQ, 1.0, "inf-select")
    e = LinExpr({tau: -1.0})
    for zt in copies:
        e.add_term(zt, 1.0)
    model.add_linear(e, Sense.EQ, 0.0, "inf-norm")
    block = GraphBlock(list(t_vars), [tau], zs + betas + selectors + copies)
    block.check_disjoint()
    return block
