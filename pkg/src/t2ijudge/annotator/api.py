"""HTTP service over the annotation store.

Thin endpoint layer: every route delegates to AnnotationStore and maps
its failures onto status codes (validation 422 with field-by-field
errors, revision races 409, unknown names 404, auth 401).  Step payload
schemas are versioned by a ``schema_version`` field checked server-side.
"""

from __future__ import annotations

import base64
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import RedirectResponse, Response
from pydantic import BaseModel, Field

from .store import AnnotationStore, ConflictError, Step, StoreError, ValidationFailure

TOKEN_HEADER = "x-annotation-token"

_SUFFIX_MIME = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".webp": "image/webp",
    ".gif": "image/gif",
}


class SessionRequest(BaseModel):
    annotator_id: str = Field(min_length=1)


class StepRequest(BaseModel):
    expected_revision: int = Field(default=0, ge=0)
    payload: dict


def _violation_errors(failure: ValidationFailure) -> list[dict]:
    return [{"field": v.field, "message": v.message} for v in failure.violations]


def create_app(
    store: AnnotationStore, token: Optional[str] = None, ui_origin: str = "*"
) -> FastAPI:
    app = FastAPI(title="annotation service", docs_url="/api/docs", openapi_url="/api/openapi.json")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[ui_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def require_token(request: Request) -> None:
        if token is None:
            return
        if request.headers.get(TOKEN_HEADER) != token:
            raise HTTPException(status_code=401, detail="missing or wrong token")

    guarded = [Depends(require_token)]

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "items": len(store.benchmark)}

    @app.post("/api/session", dependencies=guarded)
    def create_session(body: SessionRequest) -> dict:
        try:
            return store.create_session(body.annotator_id)
        except StoreError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/api/session/{annotator_id}/next", dependencies=guarded)
    def next_item(annotator_id: str) -> dict:
        try:
            view = store.next_item(annotator_id)
        except StoreError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if view is None:
            return {"done": True}
        view["done"] = False
        return view

    @app.get("/api/session/{annotator_id}/progress", dependencies=guarded)
    def progress(annotator_id: str) -> dict:
        try:
            return store.progress(annotator_id)
        except StoreError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post(
        "/api/session/{annotator_id}/items/{item_id}/steps/{step}",
        dependencies=guarded,
    )
    def submit_step(annotator_id: str, item_id: str, step: Step, body: StepRequest) -> dict:
        try:
            return store.submit_step(
                annotator_id, item_id, step, body.payload, body.expected_revision
            )
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValidationFailure as exc:
            raise HTTPException(status_code=422, detail=_violation_errors(exc))
        except StoreError as exc:
            status = 404 if "unknown item" in str(exc) or "no session" in str(exc) else 400
            raise HTTPException(status_code=status, detail=str(exc))

    @app.get("/api/items/{item_id}/image", dependencies=guarded)
    def item_image(item_id: str):
        item = next((i for i in store.benchmark if i.item_id == item_id), None)
        if item is None:
            raise HTTPException(status_code=404, detail=f"unknown item '{item_id}'")
        uri = item.image.uri
        if uri.startswith(("http://", "https://")):
            return RedirectResponse(uri)
        if uri.startswith("data:"):
            header, _, encoded = uri.partition(",")
            mime = header[len("data:"):].split(";")[0] or "application/octet-stream"
            try:
                blob = base64.b64decode(encoded)
            except ValueError:
                raise HTTPException(status_code=502, detail="undecodable image data uri")
            return Response(content=blob, media_type=mime)
        path = Path(uri)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"image file missing: {uri}")
        mime = _SUFFIX_MIME.get(path.suffix.lower(), "application/octet-stream")
        return Response(content=path.read_bytes(), media_type=mime)

    @app.get("/api/export", dependencies=guarded)
    def export(annotator_id: Optional[str] = None) -> dict:
        try:
            exported = store.export_records(annotator_id)
        except ValidationFailure as exc:
            raise HTTPException(status_code=500, detail=_violation_errors(exc))
        except StoreError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {
            "records": {
                aid: [record.to_dict() for record in records]
                for aid, records in exported.items()
            }
        }

    return app


def run_server(
    store: AnnotationStore,
    host: str = "127.0.0.1",
    port: int = 8800,
    token: Optional[str] = None,
    ui_origin: str = "*",
) -> None:
    import uvicorn

    uvicorn.run(create_app(store, token, ui_origin), host=host, port=port, log_level="warning")
