"""HTTP front end: start sessions, stream their events, read their traces.

Each POSTed question runs in its own worker thread writing to a bounded
per-session event log; any number of readers stream that log concurrently,
resuming from an arbitrary sequence number after a disconnect.  A slow or
absent reader never blocks the planner.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse

from .config import ConfigError, EngineConfig, build_backends, load_templates
from .events import EventLog
from .planner import PlannerConfig, PlannerSession, drive_session

FOLLOW_UP_PREFIX = "Context from a previous answer:\n{answer}\n\nFollow-up question: {question}"


class UnknownSessionError(KeyError):
    pass


class PurgedSessionError(KeyError):
    pass


class SessionManager:
    """Owns the running sessions and their event logs."""

    def __init__(self, backends, templates, planner_config: PlannerConfig, event_cap: int) -> None:
        self._backends = backends
        self._templates = templates
        self._planner_config = planner_config
        self._event_cap = event_cap
        self._lock = threading.Lock()
        self._sessions: dict[str, PlannerSession] = {}
        self._threads: dict[str, threading.Thread] = {}
        self._purged: set[str] = set()

    def start(self, question: str) -> str:
        log = EventLog(cap=self._event_cap)
        session = PlannerSession(question, self._planner_config, events=log)
        log.session_id = session.session_id
        thread = threading.Thread(
            target=drive_session,
            args=(session, self._backends, self._templates),
            name=f"session-{session.session_id}",
            daemon=True,
        )
        with self._lock:
            self._sessions[session.session_id] = session
            self._threads[session.session_id] = thread
        thread.start()
        return session.session_id

    def get(self, session_id: str) -> PlannerSession:
        with self._lock:
            if session_id in self._purged:
                raise PurgedSessionError(session_id)
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(session_id)
        return session

    def purge(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise UnknownSessionError(session_id)
            session = self._sessions.pop(session_id)
            self._threads.pop(session_id, None)
            self._purged.add(session_id)
        session.events.close()

    def join(self, session_id: str, timeout: float | None = None) -> None:
        with self._lock:
            thread = self._threads.get(session_id)
        if thread is not None:
            thread.join(timeout=timeout)


def _sse_frame(event) -> str:
    return f"id: {event.seq}\nevent: {event.kind}\ndata: {event.to_json()}\n\n"


def create_app(
    cfg: EngineConfig | None = None,
    backends=None,
    templates=None,
    planner_config: PlannerConfig | None = None,
) -> FastAPI:
    """Build the service; tests may inject assembled backends directly."""
    cfg = cfg or EngineConfig()
    if backends is None:
        backends = build_backends(cfg)
    if templates is None:
        templates = load_templates(cfg)
    if planner_config is None:
        planner_config = cfg.planner_config()
    manager = SessionManager(backends, templates, planner_config, cfg.service_event_buffer_cap)

    app = FastAPI(title="deepsearch", docs_url=None, redoc_url=None)
    app.state.manager = manager

    def lookup(session_id: str) -> PlannerSession:
        try:
            return manager.get(session_id)
        except PurgedSessionError:
            raise HTTPException(status_code=409, detail="session purged") from None
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/v1/ask")
    async def ask(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="body must be a JSON object") from None
        if not isinstance(body, dict):
            raise HTTPException(status_code=400, detail="body must be a JSON object")
        question = str(body.get("question") or "").strip()
        if not question:
            raise HTTPException(status_code=400, detail="question must be non-empty")
        follow_up_of = body.get("follow_up_of")
        if follow_up_of:
            prior = lookup(str(follow_up_of))
            if prior.final_response is None:
                raise HTTPException(
                    status_code=409, detail="prior session has no final answer yet"
                )
            question = FOLLOW_UP_PREFIX.format(
                answer=prior.final_response.answer_text, question=question
            )
        return {"session_id": manager.start(question)}

    @app.get("/v1/sessions/{session_id}/events")
    def events(session_id: str, request: Request) -> StreamingResponse:
        session = lookup(session_id)
        raw = request.headers.get("last-event-seq", "0")
        try:
            after_seq = int(raw)
        except ValueError:
            raise HTTPException(
                status_code=400, detail="Last-Event-Seq must be an integer"
            ) from None

        def generate():
            for event in session.events.stream(after_seq=after_seq):
                yield _sse_frame(event)

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/v1/sessions/{session_id}/trace")
    def trace(session_id: str) -> dict:
        return lookup(session_id).as_trace_dict()

    @app.delete("/v1/sessions/{session_id}")
    def purge(session_id: str) -> dict:
        lookup(session_id)
        manager.purge(session_id)
        return {"purged": session_id}

    return app


def serve(cfg: EngineConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    try:
        app = create_app(cfg)
    except ConfigError:
        raise
    host, port = cfg.bind_address()
    uvicorn.run(app, host=host, port=port, log_level="warning")
