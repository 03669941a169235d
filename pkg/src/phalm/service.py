"""HTTP API over the annotation store, consumed by the annotation UI.

GET  /health                      liveness probe
GET  /tasks/next?kind=&worker=    one open task for this worker, or 204
GET  /tasks/{id}/judgments        judgments recorded for a task
POST /tasks/{id}/judgments        {worker_id, value} -> {status: ...}
GET  /reports/agreement?relation= Fleiss's kappa for a relation
GET  /reports/validity            per-relation valid counts

Identity is an opaque worker string from the UI session; an optional shared
deployment token (X-Phalm-Token) gates writes when configured.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Header, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .crowd import (
    SUBMIT_DOMAIN_ERROR,
    SUBMIT_DUPLICATE_WORKER,
    TASK_KINDS,
    CrowdError,
    CrowdStore,
    TaskClosed,
    TaskNotFound,
    task_view,
)


class JudgmentSubmission(BaseModel):
    worker_id: str
    value: str | int


def create_app(
    store: CrowdStore,
    token: str | None = None,
    store_path: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="phalm crowd service")
    # The annotation UI may be served from another origin; the deployment
    # token (when set) remains the write gate.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    def check_token(provided: str | None) -> JSONResponse | None:
        if token is not None and provided != token:
            return JSONResponse(status_code=401, content={"status": "unauthorized"})
        return None

    def persist() -> None:
        if store_path is not None:
            store.save(store_path)

    @app.get("/health")
    def health():
        return {"status": "ok", "open_tasks": store.pending_count()}

    @app.get("/tasks/next")
    def next_task(
        kind: str | None = Query(default=None),
        worker: str | None = Query(default=None),
    ):
        if kind is not None and kind not in TASK_KINDS:
            return JSONResponse(status_code=422, content={
                "status": "domain_error",
                "reason": f"unknown task kind {kind!r}",
            })
        task = store.next_open_task(kind=kind, worker_id=worker)
        if task is None:
            return Response(status_code=204)
        return task_view(task)

    @app.get("/tasks/{task_id}/judgments")
    def task_judgments(task_id: str):
        try:
            judgments = store.judgments_for(task_id)
        except TaskNotFound:
            return JSONResponse(status_code=404, content={"status": "not_found"})
        return {
            "task_id": task_id,
            "judgments": [
                {"id": j.id, "worker_id": j.worker_id, "value": j.value,
                 "submitted_at": j.submitted_at}
                for j in judgments
            ],
        }

    @app.post("/tasks/{task_id}/judgments")
    def submit(
        task_id: str,
        submission: JudgmentSubmission,
        x_phalm_token: str | None = Header(default=None),
    ):
        denied = check_token(x_phalm_token)
        if denied is not None:
            return denied
        try:
            result = store.submit_judgment(task_id, submission.worker_id, submission.value)
        except TaskNotFound:
            return JSONResponse(status_code=404, content={"status": "not_found"})
        except TaskClosed as exc:
            return JSONResponse(status_code=410, content={"status": "task_closed",
                                                          "reason": str(exc)})
        if result == SUBMIT_DUPLICATE_WORKER:
            return JSONResponse(status_code=409, content={
                "status": result,
                "reason": f"worker {submission.worker_id} already judged {task_id}",
            })
        if result == SUBMIT_DOMAIN_ERROR:
            return JSONResponse(status_code=422, content={
                "status": result,
                "reason": f"value {submission.value!r} is outside the task's domain",
            })
        persist()
        return {"status": result}

    @app.get("/reports/agreement")
    def agreement(relation: str = Query(...)):
        try:
            report = store.agreement_report(relation)
        except CrowdError as exc:
            return JSONResponse(status_code=404, content={"status": "no_data",
                                                          "reason": str(exc)})
        return {
            "relation": report.relation,
            "kappa": report.kappa,
            "degenerate": report.degenerate,
            "n_items": report.n_items,
            "n_raters": report.n_raters,
        }

    @app.get("/reports/validity")
    def validity():
        return store.validity_report()

    return app
