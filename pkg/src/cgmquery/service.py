"""Local HTTP API for the chat UI.

Loopback-only by design: the privacy story assumes the service and the data
live on the user's machine. Responses carry trace summaries (tool names,
latencies) rather than full traces, and never raw readings.

Clarification state machine: a session holds at most one pending query.
A reply flagged ``clarification: true`` resumes it; any other message
cancels it and starts fresh.
"""
from __future__ import annotations

import hashlib
import threading
import uuid
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .aggregation import daily_trend_profile, render_trend_svg
from .agent.backends import BackendError
from .agent.pipeline import (
    ClarificationTurn,
    Pipeline,
    PipelineConfig,
    PipelineError,
    UserQuery,
)
from .data import DataError, DateSelection
from .metrics import RangeThresholds
from .sandbox import ToolRegistry
from .store import DataStore
from .toolkit import build_cgm_registry


class SessionCreate(BaseModel):
    subject_id: str


class MessageIn(BaseModel):
    text: str
    clarification: bool = False


@dataclass
class Session:
    session_id: str
    subject_id: str
    history: list[dict] = field(default_factory=list)
    pending_query: UserQuery | None = None
    pending_question: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    created_at: str = ""


@dataclass
class ServiceConfig:
    stores: dict[str, DataStore]
    backend_factory: Callable[[], Any]
    registry: ToolRegistry | None = None
    prompts_dir: str | Path | None = None
    interactive: bool = True
    static_dir: str | Path | None = None


def _trace_summary(trace) -> dict[str, Any]:
    return {
        "tools": [c.name for c in trace.tool_calls],
        "latency_seconds": round(trace.latency_seconds, 6),
        "backend_calls": trace.backend_calls,
        "layer_latencies": {k: round(v, 6) for k, v in trace.layer_latencies.items()},
    }


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="cgmquery", version="0.1.0")
    registry = config.registry or build_cgm_registry()
    pipelines: dict[str, Pipeline] = {}
    sessions: dict[str, Session] = {}

    def pipeline_for(subject_id: str) -> Pipeline:
        if subject_id not in pipelines:
            pipelines[subject_id] = Pipeline(PipelineConfig(
                backend=config.backend_factory(),
                registry=registry,
                data=config.stores[subject_id],
                prompts_dir=config.prompts_dir,
                interactive=config.interactive,
            ))
        return pipelines[subject_id]

    def reference_for(subject_id: str) -> tuple[date, datetime]:
        # Retrospective data: "today" is the day after the last recording.
        last = config.stores[subject_id].series.dates()[-1]
        ref = last + timedelta(days=1)
        return ref, datetime.combine(ref, time(9, 0))

    @app.get("/api/health")
    def health() -> dict[str, Any]:
        return {
            "status": "ok",
            "subjects": sorted(config.stores),
            "tool_count": len(registry),
        }

    @app.post("/api/sessions", status_code=201)
    def create_session(body: SessionCreate) -> dict[str, str]:
        if body.subject_id not in config.stores:
            raise HTTPException(404, f"unknown subject: {body.subject_id!r}")
        session = Session(
            session_id=uuid.uuid4().hex,
            subject_id=body.subject_id,
            created_at=datetime.now().isoformat(),
        )
        sessions[session.session_id] = session
        return {"session_id": session.session_id, "subject_id": session.subject_id}

    @app.post("/api/sessions/{session_id}/message")
    def post_message(session_id: str, body: MessageIn) -> dict[str, Any]:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session: {session_id!r}")
        with session.lock:
            pipeline = pipeline_for(session.subject_id)
            session.history.append({"role": "user", "text": body.text})
            clarifications: list[ClarificationTurn] | None = None
            if body.clarification and session.pending_query is not None:
                query = session.pending_query
                clarifications = [
                    ClarificationTurn(session.pending_question or "", body.text)
                ]
                session.pending_query = None
                session.pending_question = None
            else:
                session.pending_query = None  # a new message cancels pending
                session.pending_question = None
                ref_date, ref_dt = reference_for(session.subject_id)
                query = UserQuery(
                    text=body.text,
                    reference_date=ref_date,
                    reference_datetime=ref_dt,
                    session_id=session_id,
                )
                if config.interactive:
                    from .agent.pipeline import QueryTrace

                    probe = QueryTrace()
                    try:
                        question = pipeline.detect_ambiguity(query, probe)
                    except (PipelineError, BackendError) as exc:
                        raise HTTPException(502, detail=str(exc))
                    if question is not None:
                        session.pending_query = query
                        session.pending_question = question
                        session.history.append(
                            {"role": "clarification", "text": question}
                        )
                        return {"type": "clarification", "question": question}
            try:
                response, trace = pipeline.answer(query, clarifications=clarifications)
            except PipelineError as exc:
                raise HTTPException(
                    502, detail={"layer": exc.layer, "message": str(exc)}
                )
            except BackendError as exc:
                raise HTTPException(502, detail={"layer": "backend", "message": str(exc)})
            session.history.append({"role": "agent", "text": response.text})
            return {
                "type": "answer",
                "response": {
                    "text": response.text,
                    "cited_period": response.cited_period,
                    "is_refusal": response.is_refusal,
                },
                "trace": _trace_summary(trace),
            }

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str) -> dict[str, Any]:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session: {session_id!r}")
        return {
            "session_id": session.session_id,
            "subject_id": session.subject_id,
            "history": list(session.history),
            "pending_clarification": session.pending_question,
        }

    @app.get("/api/subjects/{subject_id}/trend")
    def trend(
        subject_id: str, dates: str, bin: int = 30, svg: int = 0
    ) -> Response:
        if subject_id not in config.stores:
            raise HTTPException(404, f"unknown subject: {subject_id!r}")
        try:
            selection = _parse_dates_param(dates)
            profile = daily_trend_profile(
                config.stores[subject_id].series, selection, bin_minutes=bin
            )
        except (DataError, ValueError) as exc:
            raise HTTPException(400, detail=str(exc))
        etag = hashlib.sha256(f"{subject_id}|{dates}|{bin}".encode()).hexdigest()[:32]
        if svg:
            return Response(
                content=render_trend_svg(profile, RangeThresholds()),
                media_type="image/svg+xml",
                headers={"ETag": etag},
            )
        import json as json_mod

        body = {
            "subject_id": subject_id,
            "bin_minutes": profile.bin_minutes,
            "bins": profile.as_dicts(),
        }
        return Response(
            content=json_mod.dumps(body),
            media_type="application/json",
            headers={"ETag": etag},
        )

    if config.static_dir is not None and Path(config.static_dir).is_dir():
        app.mount(
            "/", StaticFiles(directory=str(config.static_dir), html=True), name="ui"
        )

    return app


def _parse_dates_param(raw: str) -> DateSelection:
    raw = raw.strip()
    if ":" in raw:
        start_s, end_s = raw.split(":", 1)
        return DateSelection.from_range(
            date.fromisoformat(start_s), date.fromisoformat(end_s)
        )
    days = [date.fromisoformat(part) for part in raw.split(",") if part]
    return DateSelection.from_dates(days)
