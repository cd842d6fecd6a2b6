"""Graph blocks: the mixed-integer representation of one function inside a model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..mip.model import LinExpr, MipModel, Sense, VarId
from ..solver.lp import LpStatus, minimize_expr


class DimensionMismatch(Exception):
    pass


class EncodingError(Exception):
    pass


@dataclass
class GraphBlock:
    """Input/output/internal variable ids of one encoded function."""

    inputs: List[VarId]
    outputs: List[VarId]
    internals: List[VarId] = field(default_factory=list)

    def check_disjoint(self) -> None:
        ids = self.inputs + self.outputs + self.internals
        if len(ids) != len(set(ids)):
            raise EncodingError("block id lists overlap")


def compose(model: MipModel, block_a: GraphBlock, block_b: GraphBlock) -> GraphBlock:
    """Feed block_a's outputs into block_b's inputs: the block for b after a."""
    if len(block_a.outputs) != len(block_b.inputs):
        raise DimensionMismatch(
            f"{len(block_a.outputs)} outputs vs {len(block_b.inputs)} inputs"
        )
    for u, x in zip(block_a.outputs, block_b.inputs):
        model.add_linear(LinExpr({u: 1.0, x: -1.0}), Sense.EQ, 0.0, "compose")
    internals = (
        block_a.internals + block_a.outputs + block_b.inputs + block_b.internals
    )
    return GraphBlock(list(block_a.inputs), list(block_b.outputs), internals)


def output_box(model: MipModel, block: GraphBlock) -> Tuple[np.ndarray, np.ndarray]:
    """Per-output bounds over the model's LP relaxation (valid outer box)."""
    lo = np.zeros(len(block.outputs))
    hi = np.zeros(len(block.outputs))
    for k, v in enumerate(block.outputs):
        expr = LinExpr({v: 1.0})
        rmin = minimize_expr(model, expr)
        rmax = minimize_expr(model, expr, maximize=True)
        lo[k] = rmin.objective if rmin.status is LpStatus.OPTIMAL else -np.inf
        hi[k] = rmax.objective if rmax.status is LpStatus.OPTIMAL else np.inf
    return lo, hi
