"""Result container shared by all verification runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

CERT_TOL = 1e-6


@dataclass
class VerifyReport:
    """Outcome of one verification program.

    ``value`` is the incumbent objective (gamma, xi, or a region radius),
    ``bound`` the solver's certified bound on the true optimum. The decision
    rule behind ``certified`` always uses the bound, never the incumbent, so
    a run stopped at a limit can still certify.
    """

    kind: str
    status: str
    value: float
    bound: float
    gap: float
    witness_x0: Optional[np.ndarray]
    certified: bool
    diagnostics: Dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        witness = None
        if self.witness_x0 is not None:
            witness = np.asarray(self.witness_x0, dtype=float).tolist()
        return {
            "kind": self.kind,
            "status": self.status,
            "value": _num(self.value),
            "bound": _num(self.bound),
            "gap": _num(self.gap),
            "witness": witness,
            "certified": bool(self.certified),
            "diagnostics": _plain(self.diagnostics),
        }


def _num(v):
    """Strict-JSON numbers: non-finite values become their string names."""
    v = float(v)
    if np.isfinite(v):
        return v
    return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")


def _plain(obj):
    """JSON-friendly copies of numpy scalars and arrays in diagnostics."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, float) or isinstance(obj, np.floating):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def solver_diagnostics(sol, config, model=None) -> Dict:
    """Common solver fields; wall time is dropped in deterministic mode."""
    diag = {"nodes": sol.nodes}
    if not config.deterministic:
        diag["wall_time"] = sol.wall_time
    if model is not None:
        diag["binaries"] = len(model.binary_vars())
        diag["variables"] = model.num_vars
        diag["constraints"] = len(model.constraints)
    return diag
