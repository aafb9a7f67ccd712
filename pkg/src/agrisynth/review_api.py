"""HTTP facade over the review queue for the browser review UI.

All mutations funnel through ReviewQueue.apply_verdict, so the API
cannot put an entry into a state the queue itself would refuse. Errors
are returned as {"error": message, "code": slug} with conventional
status codes: 404 unknown entry, 409 already-finalized entry, 422
malformed verdicts.
"""

from __future__ import annotations

import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .review import (
    InvalidVerdictError,
    NotFoundError,
    ReviewQueue,
    ReviewState,
    StateError,
    Verdict,
    VerdictAction,
)

AUTH_TOKEN_ENV = "REVIEW_API_TOKEN"

_STATE_VALUES = {state.value.casefold(): state for state in ReviewState}
_ACTION_VALUES = {action.value.casefold(): action for action in VerdictAction}


class BindError(OSError):
    pass


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "code": code})


def _default_clock() -> str:
    return datetime.now(timezone.utc).isoformat()


def create_app(
    queue: ReviewQueue,
    clock: Callable[[], str] | None = None,
    auth_token: str | None = None,
) -> FastAPI:
    """Build the API app around an existing queue.

    auth_token defaults to the REVIEW_API_TOKEN environment variable;
    when set, every /api route requires it as a bearer token.
    """
    clock = clock or _default_clock
    token = auth_token if auth_token is not None else os.environ.get(AUTH_TOKEN_ENV)
    app = FastAPI(title="knowledge review", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.middleware("http")
    async def check_auth(request: Request, call_next):
        if token and request.url.path.startswith("/api") and request.method != "OPTIONS":
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return _error(401, "unauthorized", "missing or invalid bearer token")
        return await call_next(request)

    @app.exception_handler(NotFoundError)
    async def on_not_found(request: Request, exc: NotFoundError):
        return _error(404, "not_found", str(exc.args[0]) if exc.args else "entry not found")

    @app.exception_handler(StateError)
    async def on_state_error(request: Request, exc: StateError):
        return _error(409, "conflict", str(exc))

    @app.exception_handler(InvalidVerdictError)
    async def on_invalid_verdict(request: Request, exc: InvalidVerdictError):
        return _error(422, "invalid_verdict", str(exc))

    @app.get("/api/queue")
    async def get_queue(state: str | None = None):
        if state is None:
            return [entry.to_dict() for entry in queue.entries()]
        parsed = _STATE_VALUES.get(state.casefold())
        if parsed is None:
            return _error(422, "invalid_state", f"unknown state filter {state!r}")
        return [entry.to_dict() for entry in queue.entries(parsed)]

    @app.get("/api/entries/{entry_id}")
    async def get_entry(entry_id: str):
        return queue.get(entry_id).to_dict()

    @app.post("/api/entries/{entry_id}/verdict")
    async def post_verdict(entry_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(422, "invalid_body", "request body must be a JSON object")
        if not isinstance(body, dict):
            return _error(422, "invalid_body", "request body must be a JSON object")
        action = _ACTION_VALUES.get(str(body.get("action", "")).casefold())
        if action is None:
            return _error(422, "invalid_verdict", f"unknown action {body.get('action')!r}")
        reviewer_id = body.get("reviewer_id")
        if not isinstance(reviewer_id, str) or not reviewer_id.strip():
            return _error(422, "invalid_verdict", "reviewer_id is required")
        verdict = Verdict(
            entry_id=entry_id,
            action=action,
            reviewer_id=reviewer_id.strip(),
            timestamp=clock(),
            edited_text=body.get("edited_text"),
            note=body.get("note"),
        )
        return queue.apply_verdict(verdict).to_dict()

    @app.get("/api/stats")
    async def get_stats():
        return queue.stats()

    return app


def serve(
    root: Path | str,
    host: str = "127.0.0.1",
    port: int = 8765,
    auth_token: str | None = None,
) -> None:
    """Run the API over the queue persisted under root until interrupted."""
    import uvicorn

    app = create_app(ReviewQueue(root), auth_token=auth_token)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
