"""Command-line front end.

Every command is a thin client of the HTTP service: by default requests go
through an in-process ASGI transport, so no server needs to run; --server
switches to a remote deployment of the same app.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from typing import Optional

import click
import httpx

from .specio import SpecFormatError, load_json

VERIFY_TASKS = {
    "error": "/verify/error",
    "error-box": "/verify/error-box",
    "robust": "/verify/robust",
    "stability-sufficient": "/verify/stability-sufficient",
    "stability-direct": "/verify/stability-direct",
    "stable-region": "/verify/stable-region",
}

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CERTIFIED = 2


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    from .service import create_app
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient
    return TestClient(create_app(), raise_server_exceptions=False)


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".policert-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(body: dict, out: Optional[str]) -> None:
    text = json.dumps(body, indent=2) + "\n"
    if out:
        _atomic_write(out, text)
    else:
        click.echo(text, nl=False)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_ERROR)


@click.group()
def main() -> None:
    """Certify MILP-representable control policies against MPC baselines."""


@main.command()
@click.argument("task", type=click.Choice(sorted(VERIFY_TASKS)))
@click.option("--baseline", required=True, type=click.Path(),
              help="Baseline spec: policy JSON or controller JSON.")
@click.option("--candidate", required=True, type=click.Path(),
              help="Candidate policy JSON.")
@click.option("--domain", type=click.Path(),
              help="Polytope JSON; optional for the stability tasks.")
@click.option("--norm", default="inf", type=click.Choice(["inf", "one"]),
              help="Norm for the error task.")
@click.option("--epsilon", type=float, help="Lyapunov decrease margin.")
@click.option("--gamma-hat", type=float, help="Disturbance budget (robust task).")
@click.option("--time-limit", type=float, help="Solver wall-clock limit, seconds.")
@click.option("--node-limit", type=int, help="Branch-and-bound node limit.")
@click.option("--gap-tol", type=float, help="Relative optimality gap target.")
@click.option("--deterministic", is_flag=True, help="Reproducible reports.")
@click.option("--threads", type=int, default=None,
              help="Solver threads; defaults to $POLICERT_THREADS or 1.")
@click.option("--tighten", is_flag=True, help="LP-tightened activation bounds.")
@click.option("--out", type=click.Path(), help="Report path (written atomically).")
@click.option("--server", default=None, help="Base URL of a running service.")
def verify(task, baseline, candidate, domain, norm, epsilon, gamma_hat,
           time_limit, node_limit, gap_tol, deterministic, threads, tighten,
           out, server):
    """Run one verification program and write its report."""
    if task == "robust" and gamma_hat is None:
        _fail("the robust task requires --gamma-hat")
    if domain is None and task in ("error", "error-box", "robust"):
        _fail(f"the {task} task requires --domain")

    if threads is None:
        threads = int(os.environ.get("POLICERT_THREADS", "1"))
    solver = {k: v for k, v in {
        "time_limit": time_limit,
        "node_limit": node_limit,
        "gap_tol": gap_tol,
        "deterministic": deterministic or None,
        "threads": threads,
    }.items() if v is not None}

    try:
        payload = {
            "baseline": load_json(baseline),
            "candidate": load_json(candidate),
            "solver": solver,
            "tighten": tighten,
        }
        if domain is not None:
            payload["domain"] = load_json(domain)
    except SpecFormatError as e:
        _fail(str(e))
    if task == "error":
        payload["norm"] = norm
    if task == "robust":
        payload["gamma_hat"] = gamma_hat
    if task.startswith("stability") or task == "stable-region":
        if epsilon is not None:
            payload["epsilon"] = epsilon

    try:
        with _client(server) as client:
            resp = client.post(VERIFY_TASKS[task], json=payload)
    except httpx.HTTPError as e:
        _fail(f"service request failed: {e}")
    if resp.status_code != 200:
        detail = resp.json().get("detail", resp.text) if resp.content else resp.text
        _fail(f"verification rejected: {detail}")

    body = resp.json()
    _emit(body, out)
    sys.exit(_exit_code(body))


def _exit_code(body: dict) -> int:
    if body.get("kind") == "StableRegion":
        return EXIT_NOT_CERTIFIED if body.get("empty") else EXIT_OK
    if "certified" in body:
        return EXIT_OK if body["certified"] else EXIT_NOT_CERTIFIED
    return EXIT_OK


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(),
              help='JSON with "policy" and "domain" entries.')
@click.option("--out", required=True, type=click.Path(), help="LP file path.")
@click.option("--server", default=None, help="Base URL of a running service.")
def export(model_path, out, server):
    """Compile a policy graph over a domain and write it in LP format."""
    try:
        doc = load_json(model_path)
    except SpecFormatError as e:
        _fail(str(e))
    if not (isinstance(doc, dict) and "policy" in doc and "domain" in doc):
        _fail(f'{model_path}: expected an object with "policy" and "domain"')
    try:
        with _client(server) as client:
            resp = client.post("/export/lp", json={
                "policy": doc["policy"], "domain": doc["domain"],
                "tighten": bool(doc.get("tighten", False)),
            })
    except httpx.HTTPError as e:
        _fail(f"service request failed: {e}")
    if resp.status_code != 200:
        detail = resp.json().get("detail", resp.text) if resp.content else resp.text
        _fail(f"export rejected: {detail}")
    _atomic_write(out, resp.json()["lp"])
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
