"""Scoring service: POST /score with {items: [{head, relation, tail}]}
returns {scores: [...]} positionally aligned, every score in [0, 1].
GET /health reports the loaded artifact's hash. Malformed requests get a
400 with the reason.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .data import RELATIONS, DataError
from .model import FilterModel


class ScoreItem(BaseModel):
    head: str
    relation: str
    tail: str


class ScoreRequest(BaseModel):
    items: list[ScoreItem]


def create_app(model: FilterModel, model_hash: str) -> FastAPI:
    app = FastAPI(title="phalm filter scorer")

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={
            "error": "malformed request", "reason": str(exc.errors()[:3]),
        })

    @app.get("/health")
    def health():
        return {"status": "ok", "model_hash": model_hash}

    @app.post("/score")
    def score(request: ScoreRequest):
        for item in request.items:
            if item.relation not in RELATIONS:
                return JSONResponse(status_code=400, content={
                    "error": "malformed request",
                    "reason": f"unknown relation {item.relation!r}",
                })
        try:
            scores = model.score([(i.head, i.relation, i.tail) for i in request.items])
        except DataError as exc:
            return JSONResponse(status_code=400, content={
                "error": "malformed request", "reason": str(exc),
            })
        return {"scores": scores}

    return app
