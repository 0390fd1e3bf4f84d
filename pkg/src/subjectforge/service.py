"""REST API for the reviewer console.

All business rules (tag vocabulary, pass thresholds, state transitions)
live server-side; the console is a thin client. Auth is an optional static
bearer token. The compiled scan lexicon is the configured base file plus
any activated candidates, so an activation changes the next scan.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .lexicon import (
    CompiledLexicon,
    LexiconEntry,
    MatchMode,
    compile_lexicon,
    scan,
)
from .review import (
    AlreadyDecided,
    CandidateStatus,
    NotFound,
    ReviewStatus,
    ReviewStore,
    ReviewTag,
    promote_examples,
)


class VerdictBody(BaseModel):
    verdict: str
    tags: list[str] = Field(default_factory=list)
    reviewer: str = ""
    ng_term: str | None = None


class ReopenBody(BaseModel):
    reviewer: str = ""


class CandidateBody(BaseModel):
    pattern: str
    reason: str = ""


class ScanBody(BaseModel):
    text: str
    mode: str = "substring"


def create_app(
    store: ReviewStore,
    base_entries: Sequence[LexiconEntry] = (),
    token: str | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="subjectforge review service")

    async def require_token(request: Request) -> None:
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    guarded = [Depends(require_token)]

    def current_lexicon() -> CompiledLexicon | None:
        entries = list(base_entries) + store.active_block_entries()
        if not entries:
            return None
        return compile_lexicon(entries)

    @app.get("/api/review/queue", dependencies=guarded)
    def get_queue(status: str | None = "pending", limit: int = 50, cursor: int = 0):
        status_filter = None
        if status and status != "all":
            try:
                status_filter = ReviewStatus(status)
            except ValueError:
                raise HTTPException(status_code=422, detail=f"unknown status {status!r}")
        items, next_cursor, counts = store.queue(status_filter, limit, cursor)
        return {
            "items": [i.to_dict() for i in items],
            "cursor": next_cursor,
            "counts": counts,
        }

    @app.get("/api/review/tags", dependencies=guarded)
    def get_tags():
        return {"tags": [t.value for t in ReviewTag]}

    @app.post("/api/review/{item_id}/verdict", dependencies=guarded)
    def post_verdict(item_id: str, body: VerdictBody):
        try:
            verdict = ReviewStatus(body.verdict)
            tags = [ReviewTag(t) for t in body.tags]
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            item = store.record_verdict(
                item_id, verdict, tags, reviewer=body.reviewer, ng_term=body.ng_term
            )
        except NotFound:
            raise HTTPException(status_code=404, detail=f"no review item {item_id!r}")
        except AlreadyDecided:
            return_item = store.get(item_id)
            raise HTTPException(
                status_code=409,
                detail={"message": "already decided", "item": return_item.to_dict()},
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return item.to_dict()

    @app.post("/api/review/{item_id}/reopen", dependencies=guarded)
    def post_reopen(item_id: str, body: ReopenBody):
        try:
            return store.reopen(item_id, reviewer=body.reviewer).to_dict()
        except NotFound:
            raise HTTPException(status_code=404, detail=f"no review item {item_id!r}")

    @app.get("/api/review/report", dependencies=guarded)
    def get_report():
        return store.report().to_dict()

    @app.get("/api/lexicon/candidates", dependencies=guarded)
    def get_candidates(status: str | None = None):
        status_filter = CandidateStatus(status) if status else None
        return {"candidates": [c.to_dict() for c in store.candidates(status_filter)]}

    @app.post("/api/lexicon/candidates", dependencies=guarded)
    def post_candidate(body: CandidateBody):
        if not body.pattern.strip():
            raise HTTPException(status_code=422, detail="pattern must be non-empty")
        return store.add_candidate(body.pattern.strip(), body.reason).to_dict()

    @app.post("/api/lexicon/candidates/{candidate_id}/activate", dependencies=guarded)
    def post_activate(candidate_id: str):
        try:
            return store.activate_candidate(candidate_id).to_dict()
        except NotFound:
            raise HTTPException(status_code=404, detail=f"no candidate {candidate_id!r}")

    @app.post("/api/lexicon/candidates/{candidate_id}/discard", dependencies=guarded)
    def post_discard(candidate_id: str):
        try:
            return store.discard_candidate(candidate_id).to_dict()
        except NotFound:
            raise HTTPException(status_code=404, detail=f"no candidate {candidate_id!r}")

    @app.get("/api/lexicon/active", dependencies=guarded)
    def get_active():
        entries = list(base_entries) + store.active_block_entries()
        return {
            "entries": [
                {"pattern": e.pattern, "kind": e.kind.value, "reason": e.reason}
                for e in entries
            ]
        }

    @app.post("/api/lexicon/scan", dependencies=guarded)
    def post_scan(body: ScanBody):
        try:
            mode = MatchMode(body.mode)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown mode {body.mode!r}")
        lex = current_lexicon()
        spans = scan(body.text, lex, mode) if lex else []
        return {
            "spans": [
                {
                    "pattern": s.pattern,
                    "start": s.start,
                    "end": s.end,
                    "suppressed_by_allow": s.suppressed_by_allow,
                }
                for s in spans
            ]
        }

    @app.post("/api/examples/promote", dependencies=guarded)
    def post_promote():
        diff = promote_examples(store.items())
        for entry in diff.lexicon_candidates:
            store.add_candidate(entry.pattern, entry.reason)
        return diff.to_dict()

    if static_dir is not None and Path(static_dir).is_dir():
        static_path = Path(static_dir)

        @app.get("/")
        def index():
            return FileResponse(static_path / "index.html")

        app.mount("/", StaticFiles(directory=static_path), name="console")

    return app
