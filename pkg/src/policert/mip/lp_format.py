"""Plain-text LP format export.

Variables are emitted under canonical names ``x{id}`` so the document is
always re-importable regardless of user-supplied labels. The quadratic
objective uses the bracketed section with the conventional division by two,
i.e. the coefficients inside ``[ ... ] / 2`` are exactly the entries of Q
for an objective 0.5 x'Qx (cross terms doubled).
"""

from __future__ import annotations

import math
from typing import List

from .model import MipModel, ObjSense, Sense, VarKind


def _num(x: float) -> str:
    return format(x, ".17g")


def _term(coef: float, name: str, first: bool) -> str:
    sign = "-" if coef < 0 else ("" if first else "+")
    mag = abs(coef)
    lead = "" if first and sign == "" else f"{sign} "
    return f"{lead}{_num(mag)} {name}"


def _expr_terms(terms, lines: List[str], indent: str = "  ") -> None:
    first = True
    buf = indent
    for name, coef in terms:
        piece = _term(coef, name, first)
        first = False
        if len(buf) + len(piece) > 200:
            lines.append(buf)
            buf = indent
        buf += piece + " "
    lines.append(buf.rstrip())


def export_lp_text(model: MipModel) -> str:
    """Render the model in LP text format."""
    model.validate()
    obj = model.objective
    lines: List[str] = []
    lines.append("\\ " + model.name)
    lines.append("Minimize" if obj.sense is ObjSense.MIN else "Maximize")

    lin_terms = [(f"x{v}", c) for v, c in sorted(obj.linear.terms.items()) if c != 0.0]
    if not lin_terms and model.num_vars:
        lin_terms = [("x0", 0.0)]
    chunk: List[str] = []
    if lin_terms:
        _expr_terms(lin_terms, chunk)
    lines.append(" obj: " + " ".join(s.strip() for s in chunk))
    if obj.quad:
        qterms = []
        for (i, j), q in sorted(obj.quad.items()):
            if q == 0.0:
                continue
            if i == j:
                qterms.append((f"x{i} ^ 2", q))
            else:
                qterms.append((f"x{i} * x{j}", 2.0 * q))
        if qterms:
            qlines: List[str] = []
            _expr_terms(qterms, qlines, indent="   ")
            lines.append("  + [")
            lines.extend(qlines)
            lines.append("  ] / 2")

    lines.append("Subject To")
    for k, con in enumerate(model.constraints):
        terms = [(f"x{v}", c) for v, c in sorted(con.expr.terms.items()) if c != 0.0]
        rhs = con.rhs - con.expr.constant
        body: List[str] = []
        if terms:
            _expr_terms(terms, body, indent="")
        else:
            body = ["0 x0"]
        op = {Sense.LE: "<=", Sense.GE: ">=", Sense.EQ: "="}[con.sense]
        lines.append(f" c{k}: {' '.join(body)} {op} {_num(rhs)}")

    lines.append("Bounds")
    for v in model.variables:
        if v.kind is VarKind.BINARY:
            continue
        name = f"x{v.id}"
        lb = "-inf" if v.lb == -math.inf else _num(v.lb)
        ub = "+inf" if v.ub == math.inf else _num(v.ub)
        if v.lb == -math.inf and v.ub == math.inf:
            lines.append(f" {name} free")
        else:
            lines.append(f" {lb} <= {name} <= {ub}")

    binaries = model.binary_vars()
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(f"x{b}" for b in binaries))

    lines.append("End")
    return "\n".join(lines) + "\n"
