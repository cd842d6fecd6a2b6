"""HTTP front end exposing the verification programs.

The CLI drives this app in-process; a standalone deployment is
`uvicorn policert.service:create_app --factory`.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..encoders import EncodingError
from ..mip import MipModel, export_lp_text, VarKind
from ..policies import PolicyFormatError
from ..specio import SpecFormatError, mpc_from_dict, policy_from_spec, polytope_from_dict
from ..verify import (
    Psi2NotZeroAtOrigin,
    error_bounding_box,
    stable_region,
    verify_direct,
    verify_robust,
    verify_sufficient,
    worst_case_error,
)
from ..verify.error import default_config
from ..verify.report import _num
from . import schemas

_BAD_INPUT = (SpecFormatError, PolicyFormatError, EncodingError,
              Psi2NotZeroAtOrigin, KeyError, ValueError)


def _report_body(report) -> schemas.ReportBody:
    return schemas.ReportBody(**report.to_json_dict())


def create_app() -> FastAPI:
    app = FastAPI(title="policert", version=__version__)

    @app.exception_handler(Exception)
    async def _unhandled(request, exc):  # pragma: no cover - safety net
        raise exc

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _BAD_INPUT as e:
            raise HTTPException(status_code=422, detail=str(e))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/policies/evaluate", response_model=schemas.EvaluateBody)
    def evaluate(req: schemas.EvaluateRequest):
        policy = guard(policy_from_spec, req.policy)
        u = guard(policy.forward, np.asarray(req.x, dtype=float))
        return schemas.EvaluateBody(u=np.atleast_1d(u).tolist())

    @app.post("/export/lp", response_model=schemas.ExportBody)
    def export_lp(req: schemas.ExportRequest):
        policy = guard(policy_from_spec, req.policy)
        X = guard(polytope_from_dict, req.domain)
        model = MipModel("policy-graph")
        guard(policy.encode, model,
              [model.add_variable(lb=float(a), ub=float(b), name="x")
               for a, b in zip(*X.bounding_box())],
              X.bounding_box(), tighten=req.tighten)
        binaries = sum(1 for v in model.variables if v.kind is VarKind.BINARY)
        return schemas.ExportBody(
            lp=export_lp_text(model),
            variables=model.num_vars,
            constraints=len(model.constraints),
            binaries=binaries,
        )

    @app.post("/verify/error", response_model=schemas.ReportBody)
    def verify_error(req: schemas.ErrorRequest):
        psi1 = guard(policy_from_spec, req.baseline)
        psi2 = guard(policy_from_spec, req.candidate)
        X = guard(polytope_from_dict, req.domain)
        cfg = req.solver.to_config(default_config())
        report = guard(worst_case_error, psi1, psi2, X, norm=req.norm,
                       config=cfg, tighten=req.tighten)
        return _report_body(report)

    @app.post("/verify/error-box", response_model=schemas.ErrorBoxBody)
    def verify_error_box(req: schemas.ErrorBoxRequest):
        psi1 = guard(policy_from_spec, req.baseline)
        psi2 = guard(policy_from_spec, req.candidate)
        X = guard(polytope_from_dict, req.domain)
        cfg = req.solver.to_config(default_config())
        lower, upper = guard(error_bounding_box, psi1, psi2, X,
                             config=cfg, tighten=req.tighten)
        return schemas.ErrorBoxBody(lower=lower.tolist(), upper=upper.tolist())

    @app.post("/verify/robust", response_model=schemas.ReportBody)
    def verify_robust_ep(req: schemas.RobustRequest):
        psi1 = guard(policy_from_spec, req.baseline)
        psi2 = guard(policy_from_spec, req.candidate)
        X = guard(polytope_from_dict, req.domain)
        cfg = req.solver.to_config(default_config())
        report = guard(verify_robust, psi1, psi2, X, req.gamma_hat,
                       config=cfg, tighten=req.tighten)
        return _report_body(report)

    def _stability_inputs(req: schemas.StabilityRequest):
        mpc = guard(mpc_from_dict, _unwrap(req.baseline))
        psi2 = guard(policy_from_spec, req.candidate)
        X0 = guard(polytope_from_dict, req.domain) if req.domain else None
        cfg = req.solver.to_config(default_config())
        return mpc, psi2, X0, cfg

    @app.post("/verify/stability-sufficient", response_model=schemas.ReportBody)
    def verify_suff(req: schemas.StabilityRequest):
        mpc, psi2, X0, cfg = _stability_inputs(req)
        report = guard(verify_sufficient, mpc, psi2, X0=X0,
                       epsilon=req.epsilon, config=cfg, tighten=req.tighten)
        return _report_body(report)

    @app.post("/verify/stability-direct", response_model=schemas.ReportBody)
    def verify_dir(req: schemas.StabilityRequest):
        mpc, psi2, X0, cfg = _stability_inputs(req)
        report = guard(verify_direct, mpc, psi2, X0=X0,
                       epsilon=req.epsilon, config=cfg, tighten=req.tighten)
        return _report_body(report)

    @app.post("/verify/stable-region", response_model=schemas.StableRegionBody)
    def verify_region(req: schemas.StableRegionRequest):
        mpc, psi2, X0, cfg = _stability_inputs(req)
        C = np.asarray(req.directions, dtype=float) if req.directions else None
        spec = guard(stable_region, mpc, psi2, X0=X0, C_stable=C,
                     epsilon=req.epsilon, config=cfg, tighten=req.tighten)
        return schemas.StableRegionBody(
            directions=spec.C_stable.tolist(),
            offsets=[_num(v) for v in spec.c_star],
            empty=bool(spec.empty),
            reports=[_report_body(r) for r in spec.reports],
        )

    return app


def _unwrap(doc: dict) -> dict:
    return doc["policy"] if isinstance(doc, dict) and "policy" in doc else doc
