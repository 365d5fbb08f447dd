"""HTTP service exposing sessions, streaming turns, goal controls, and
highlight views.

All endpoints live under ``/v1``. Turn streams are newline-delimited
JSON frames over a chunked response: ``chat_chunk`` frames carry
response text as it arrives, ``pipeline_event`` frames follow once the
turn's pipeline work is done, and exactly one ``turn_complete`` ends a
successful stream. Failures mid-stream emit an ``error`` frame and
close; the session is left untouched (turns are atomic).
"""

from __future__ import annotations

import json
import logging
from typing import Any, Iterator

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from . import analysis
from .analysis import EmbeddingCache
from .backends import BackendSet
from .errors import (
    BackendError,
    DuplicateEvaluation,
    EmptyGoalText,
    GoalAlreadyActive,
    GoalNotActive,
    GoalTrackError,
    InsufficientSentences,
    InvalidConfig,
    MalformedTranscript,
    TurnInFlight,
    TurnOutOfRange,
    UnknownCategory,
    UnknownGoal,
    UnknownGoalType,
    UnknownSession,
)
from .goals import GoalType
from .pipeline import PipelineConfig, StreamChunk, TurnComplete
from .store import SessionConfig, SessionRuntime, SessionStore, canonical_json
from .timeline import build_timeline, group_events

log = logging.getLogger(__name__)

FRAME_CHAT_CHUNK = "chat_chunk"
FRAME_PIPELINE_EVENT = "pipeline_event"
FRAME_TURN_COMPLETE = "turn_complete"
FRAME_ERROR = "error"

VIEW_MODES = ("eval_examples", "key_phrases", "similar", "unique")

_STATUS_MAP: list[tuple[tuple[type, ...], int]] = [
    ((UnknownSession, UnknownGoal), 404),
    ((GoalNotActive, GoalAlreadyActive, TurnInFlight, DuplicateEvaluation), 409),
    ((BackendError,), 502),
    (
        (
            InvalidConfig,
            UnknownGoalType,
            UnknownCategory,
            MalformedTranscript,
            TurnOutOfRange,
            EmptyGoalText,
            InsufficientSentences,
        ),
        400,
    ),
]


def _status_for(exc: Exception) -> int:
    for types, status in _STATUS_MAP:
        if isinstance(exc, types):
            return status
    return 500


def _error_body(exc: Exception) -> dict[str, Any]:
    return {"error": {"type": type(exc).__name__, "message": str(exc)}}


async def _json_body(request: Request) -> dict[str, Any]:
    raw = await request.body()
    try:
        value = json.loads(raw or b"{}")
    except json.JSONDecodeError:
        raise InvalidConfig("request body is not valid JSON") from None
    if not isinstance(value, dict):
        raise InvalidConfig("request body must be a JSON object")
    return value


def _goal_view(runtime: SessionRuntime, goal) -> dict[str, Any]:
    history = runtime.state.ledger.status_history(goal.id)
    return {
        **goal.to_dict(),
        "status_history": [{"turn": t, "category": c.value} for t, c in history],
    }


def create_app(
    store: SessionStore, backends: BackendSet, frontend_dir: str | None = None
) -> FastAPI:
    app = FastAPI(title="goaltrack", version="1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    cache = EmbeddingCache()

    @app.exception_handler(GoalTrackError)
    async def goaltrack_error_handler(request: Request, exc: GoalTrackError):
        return JSONResponse(_error_body(exc), status_code=_status_for(exc))

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(_error_body(exc), status_code=400)

    # -- sessions -------------------------------------------------------

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        body = await _json_body(request)
        config = SessionConfig.from_dict(body)
        runtime = store.create_session(
            config,
            session_id=body.get("session_id"),
            created_at=body.get("created_at"),
        )
        return runtime.session.to_dict()

    @app.get("/v1/sessions")
    async def list_sessions():
        return {"sessions": store.list_sessions()}

    @app.get("/v1/sessions/{session_id}")
    async def get_session(session_id: str):
        return store.open_session(session_id).session.to_dict()

    @app.get("/v1/sessions/{session_id}/state")
    async def get_state(session_id: str):
        runtime = store.open_session(session_id)
        return {
            "session": runtime.session.to_dict(),
            "messages": [m.to_dict() for m in runtime.state.messages],
            "goals": [_goal_view(runtime, g) for g in runtime.state.ledger.all_goals()],
            "turn_records": [r.to_dict() for r in runtime.turn_records()],
        }

    @app.get("/v1/sessions/{session_id}/transcript")
    async def get_transcript(session_id: str):
        runtime = store.open_session(session_id)
        return PlainTextResponse(runtime.export_transcript(), media_type="application/x-ndjson")

    # -- turns ------------------------------------------------------------

    @app.post("/v1/sessions/{session_id}/messages")
    async def post_message(session_id: str, request: Request):
        runtime = store.open_session(session_id)
        body = await _json_body(request)
        text = body.get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise InvalidConfig("message text must be a non-empty string")

        def frames() -> Iterator[str]:
            try:
                for frame in runtime.send_message(text, backends):
                    if isinstance(frame, StreamChunk):
                        yield canonical_json({"kind": FRAME_CHAT_CHUNK, "text": frame.text}) + "\n"
                    elif isinstance(frame, TurnComplete):
                        for event in frame.record.events:
                            yield canonical_json(
                                {"kind": FRAME_PIPELINE_EVENT, "event": event.to_dict()}
                            ) + "\n"
                        yield canonical_json(
                            {
                                "kind": FRAME_TURN_COMPLETE,
                                "turn": frame.record.turn,
                                "record": frame.record.to_dict(),
                            }
                        ) + "\n"
            except (GoalTrackError, ValueError) as exc:
                log.warning("turn failed for session %s: %s", session_id, exc)
                yield canonical_json({"kind": FRAME_ERROR, **_error_body(exc)}) + "\n"

        return StreamingResponse(frames(), media_type="application/x-ndjson")

    # -- goal controls ------------------------------------------------------

    @app.post("/v1/sessions/{session_id}/goals", status_code=201)
    async def create_goal(session_id: str, request: Request):
        runtime = store.open_session(session_id)
        body = await _json_body(request)
        goal_type = GoalType.parse(str(body.get("goal_type", "")))
        goal = runtime.create_goal(str(body.get("text", "")), goal_type)
        return _goal_view(runtime, goal)

    @app.get("/v1/sessions/{session_id}/goals")
    async def list_goals(session_id: str, active: bool = False):
        runtime = store.open_session(session_id)
        ledger = runtime.state.ledger
        goals = ledger.active_goals() if active else ledger.all_goals()
        return {"goals": [_goal_view(runtime, g) for g in goals]}

    def _control(session_id: str, goal_id: str, action: str):
        runtime = store.open_session(session_id)
        goal = getattr(runtime, f"{action}_goal")(goal_id)
        return _goal_view(runtime, goal)

    @app.post("/v1/sessions/{session_id}/goals/{goal_id}/lock")
    async def lock_goal(session_id: str, goal_id: str):
        return _control(session_id, goal_id, "lock")

    @app.post("/v1/sessions/{session_id}/goals/{goal_id}/unlock")
    async def unlock_goal(session_id: str, goal_id: str):
        return _control(session_id, goal_id, "unlock")

    @app.post("/v1/sessions/{session_id}/goals/{goal_id}/complete")
    async def complete_goal(session_id: str, goal_id: str):
        return _control(session_id, goal_id, "complete")

    @app.post("/v1/sessions/{session_id}/goals/{goal_id}/restore")
    async def restore_goal(session_id: str, goal_id: str):
        return _control(session_id, goal_id, "restore")

    # -- pipeline toggles ---------------------------------------------------

    @app.patch("/v1/sessions/{session_id}/pipeline")
    async def patch_pipeline(session_id: str, request: Request):
        runtime = store.open_session(session_id)
        body = await _json_body(request)
        current = runtime.session.config.pipeline
        updated = PipelineConfig(
            infer_enabled=bool(body.get("infer", current.infer_enabled)),
            merge_enabled=bool(body.get("merge", current.merge_enabled)),
            evaluate_enabled=bool(body.get("evaluate", current.evaluate_enabled)),
            evaluation_concurrency_limit=int(
                body.get("evaluation_concurrency_limit", current.evaluation_concurrency_limit)
            ),
        )
        runtime.set_pipeline(updated)
        return updated.to_dict()

    # -- derived views --------------------------------------------------------

    @app.get("/v1/sessions/{session_id}/timeline")
    async def get_timeline(session_id: str):
        runtime = store.open_session(session_id)
        catalog = {g.id: g for g in runtime.state.ledger.all_goals()}
        return {"rows": build_timeline(runtime.turn_records(), catalog)}

    @app.get("/v1/sessions/{session_id}/events")
    async def get_events(session_id: str):
        runtime = store.open_session(session_id)
        return {"groups": group_events(runtime.events())}

    @app.get("/v1/sessions/{session_id}/goals/{goal_id}/view")
    async def goal_view(
        session_id: str,
        goal_id: str,
        mode: str = "eval_examples",
        k: int = 5,
        m: int = 2,
    ):
        runtime = store.open_session(session_id)
        goal = runtime.state.ledger.get(goal_id)
        if mode not in VIEW_MODES:
            raise InvalidConfig(f"invalid mode {mode!r}; one of {', '.join(VIEW_MODES)}")

        evaluated = runtime.state.ledger.evaluations_for_goal(goal_id)
        evaluated.sort(key=lambda pair: pair[0])
        message_ids: list[str] = []
        for _, evaluation in evaluated:
            if evaluation.message_id not in message_ids:
                message_ids.append(evaluation.message_id)
        messages = [runtime.state.get_message(mid) for mid in message_ids]

        notice = None
        highlights: list[analysis.HighlightSpan] = []
        if mode == "eval_examples":
            evaluations_only = [e for _, e in evaluated]
            for mid in message_ids:
                highlights.extend(analysis.evaluation_highlights(evaluations_only, mid))
        elif mode == "key_phrases" and messages:
            phrases = analysis.extract_keyphrases(
                [(msg.id, msg.text) for msg in messages],
                backends.pipeline,
                tags={msg.id: f"keyphrases:{msg.turn}" for msg in messages},
            )
            highlights = analysis.keyphrase_highlights(phrases)
        elif mode in ("similar", "unique") and messages:
            sentences = []
            for msg in messages:
                sentences.extend(analysis.split_sentences(msg.id, msg.text))
            if len(sentences) < 2:
                notice = "not enough sentences to compare"
            else:
                sim = analysis.similarity_matrix(sentences, backends.embeddings, cache)
                if mode == "similar":
                    pairs = analysis.top_similar_pairs(sim, k)
                    highlights = analysis.similar_pair_highlights(sim, pairs)
                else:
                    uniques = analysis.unique_sentences(sim, m)
                    highlights = analysis.unique_sentence_highlights(sim, uniques)

        payload: dict[str, Any] = {
            "goal": _goal_view(runtime, goal),
            "mode": mode,
            "messages": [m.to_dict() for m in messages],
            "highlights": [h.to_dict() for h in highlights],
            "evaluations": [
                {"turn": t, **evaluation.to_dict()} for t, evaluation in evaluated
            ],
        }
        if notice:
            payload["notice"] = notice
        return payload

    if frontend_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app
