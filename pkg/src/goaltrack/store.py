"""Event-sourced session persistence.

Each session is a single append-only JSONL log under the data
directory. State is a pure fold over the log, so any past turn can be
reconstructed exactly, and an exported transcript re-imports to the
byte. Canonical JSON (sorted keys, compact separators, UTF-8, newline
line endings) makes byte-identity testable.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Optional, TextIO

from .backends import BackendSet
from .errors import (
    InvalidConfig,
    MalformedTranscript,
    StorageFailure,
    TurnInFlight,
    TurnOutOfRange,
    UnknownSession,
)
from .goals import GoalOrigin, GoalType, InferredGoal
from .pipeline import (
    EVENT_GOAL_COMPLETED,
    EVENT_GOAL_CREATED,
    EVENT_GOAL_LOCKED,
    EVENT_GOAL_RESTORED,
    EVENT_GOAL_UNLOCKED,
    STAGE_CONTROL,
    ConversationState,
    PipelineConfig,
    PipelineEvent,
    StreamChunk,
    TurnComplete,
    TurnRecord,
    run_turn,
)

TRANSCRIPT_VERSION = 1

LINE_HEADER = "header"
LINE_MESSAGE = "message"
LINE_TURN = "turn"
LINE_CONTROL = "control"


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class PreloadedGoal:
    text: str
    goal_type: GoalType
    locked: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "goal_type": self.goal_type.value, "locked": self.locked}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PreloadedGoal":
        try:
            goal_type = GoalType(d.get("goal_type", "request"))
        except ValueError:
            raise InvalidConfig(f"unknown goal type: {d.get('goal_type')!r}") from None
        text = d.get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise InvalidConfig("preloaded goal text must be non-empty")
        return cls(text=text, goal_type=goal_type, locked=bool(d.get("locked", False)))


@dataclass
class SessionConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    backend_ref: str = "default"
    preloaded_goals: list[PreloadedGoal] = field(default_factory=list)

    def validate(self) -> "SessionConfig":
        try:
            self.pipeline.validate()
        except InvalidConfig:
            raise
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "pipeline": self.pipeline.to_dict(),
            "backend_ref": self.backend_ref,
            "preloaded_goals": [g.to_dict() for g in self.preloaded_goals],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionConfig":
        try:
            pipeline = PipelineConfig.from_dict(d.get("pipeline", {}))
        except InvalidConfig:
            raise
        except (TypeError, AttributeError):
            raise InvalidConfig("malformed pipeline config") from None
        goals_raw = d.get("preloaded_goals", []) or []
        if not isinstance(goals_raw, list):
            raise InvalidConfig("preloaded_goals must be a list")
        return cls(
            pipeline=pipeline,
            backend_ref=str(d.get("backend_ref", "default")),
            preloaded_goals=[PreloadedGoal.from_dict(g) for g in goals_raw],
        ).validate()


@dataclass
class Session:
    """Descriptor for one stored conversation."""

    session_id: str
    created_at: str
    config: SessionConfig
    turn: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "config": self.config.to_dict(),
            "turn": self.turn,
        }


# --- the fold -------------------------------------------------------------


@dataclass
class FoldState:
    session: Session
    state: ConversationState
    config: SessionConfig


def _fold_header(line: dict[str, Any]) -> FoldState:
    config = SessionConfig.from_dict(line.get("config", {}))
    session = Session(
        session_id=str(line.get("session_id", "")),
        created_at=str(line.get("created_at", "")),
        config=config,
    )
    state = ConversationState()
    for preload in config.preloaded_goals:
        goal = state.ledger.create_goal(preload.text, preload.goal_type, GoalOrigin.preloaded(), 0)
        if preload.locked:
            state.ledger.lock_goal(goal.id)
    return FoldState(session=session, state=state, config=config)


def _fold_line(fold: FoldState, line: dict[str, Any]) -> None:
    kind = line.get("kind")
    if kind == LINE_MESSAGE:
        message = fold.state.add_message(line["role"], line["text"], line["turn"])
        if message.id != line["id"]:
            raise StorageFailure(
                f"message id drift during replay: expected {line['id']}, got {message.id}"
            )
    elif kind == LINE_TURN:
        record = TurnRecord.from_dict(line["event"])
        _replay_turn_record(fold.state, record)
        fold.session.turn = record.turn
    elif kind == LINE_CONTROL:
        _replay_control(fold, line["event"])
    else:
        raise StorageFailure(f"unknown event kind in log: {kind!r}")


def _replay_turn_record(state: ConversationState, record: TurnRecord) -> None:
    """Re-apply a committed turn's ledger effects, deterministically."""
    inferred_pool = [
        InferredGoal(
            text=c.clause,
            goal_type=c.goal_type,
            source_message_id=record.user_message_id,
            grounded_span=c.grounded_span,
        )
        for c in record.inferred
    ]
    if record.merge_ops:
        pool = [g for g in state.ledger.active_goals() if not g.locked]
        state.ledger.apply_merge(
            [a.op for a in record.merge_ops],
            inferred_pool,
            record.turn,
            existing=[g.id for g in pool],
        )
    elif record.direct_admissions:
        for admission in record.direct_admissions:
            spec = inferred_pool[admission["index"]]
            goal = state.ledger.create_goal(
                spec.text,
                spec.goal_type,
                GoalOrigin.inferred(record.turn, spec.source_message_id, spec.grounded_span),
                record.turn,
            )
            if goal.id != admission["goal_id"]:
                raise StorageFailure(
                    f"goal id drift during replay: expected {admission['goal_id']}, got {goal.id}"
                )
    for evaluation in record.evaluations:
        state.ledger.record_evaluation(evaluation, record.turn)
    state.turn = record.turn


_CONTROL_ACTIONS = {
    EVENT_GOAL_LOCKED: lambda ledger, p: ledger.lock_goal(p["goal_id"]),
    EVENT_GOAL_UNLOCKED: lambda ledger, p: ledger.unlock_goal(p["goal_id"]),
    EVENT_GOAL_COMPLETED: lambda ledger, p: ledger.complete_goal(p["goal_id"]),
    EVENT_GOAL_RESTORED: lambda ledger, p: ledger.restore_goal(p["goal_id"]),
}


def _replay_control(fold: FoldState, event: dict[str, Any]) -> None:
    kind = event.get("kind")
    payload = event.get("payload", {})
    if kind in _CONTROL_ACTIONS:
        _CONTROL_ACTIONS[kind](fold.state.ledger, payload)
    elif kind == EVENT_GOAL_CREATED:
        goal = fold.state.ledger.create_goal(
            payload["text"],
            GoalType(payload["goal_type"]),
            GoalOrigin.user_created(),
            event.get("turn", fold.state.turn),
        )
        if goal.id != payload["goal_id"]:
            raise StorageFailure(
                f"goal id drift during replay: expected {payload['goal_id']}, got {goal.id}"
            )
    elif kind == "pipeline_toggled":
        fold.config.pipeline = PipelineConfig.from_dict(payload)
        fold.session.config.pipeline = fold.config.pipeline
    else:
        raise StorageFailure(f"unknown control event: {kind!r}")


def fold_lines(lines: list[dict[str, Any]]) -> FoldState:
    if not lines or lines[0].get("kind") != LINE_HEADER:
        raise StorageFailure("log must start with a header line")
    fold = _fold_header(lines[0])
    for line in lines[1:]:
        _fold_line(fold, line)
    return fold


# --- runtime ---------------------------------------------------------------


class SessionRuntime:
    """Live handle on one session: serialized writes, replayable log."""

    def __init__(self, store: "SessionStore", session: Session, state: ConversationState, lines: list[dict[str, Any]]):
        self.store = store
        self.session = session
        self.state = state
        self._lines = lines  # full log, header included
        self._write_lock = threading.RLock()
        self._turn_lock = threading.Lock()
        self.turn_in_flight = False

    @property
    def session_id(self) -> str:
        return self.session.session_id

    @property
    def config(self) -> SessionConfig:
        return self.session.config

    def events(self) -> list[dict[str, Any]]:
        return list(self._lines[1:])

    def turn_records(self) -> list[TurnRecord]:
        return [TurnRecord.from_dict(l["event"]) for l in self._lines if l.get("kind") == LINE_TURN]

    def log_length(self) -> int:
        return len(self._lines)

    # -- turns ---------------------------------------------------------

    def send_message(self, text: str, backends: BackendSet) -> Iterator[StreamChunk | TurnComplete]:
        """Run one turn; queues behind any turn already in flight.

        Nothing is persisted until the turn completes, so a failure at
        any stage leaves the session exactly as it was.
        """
        with self._turn_lock:
            self.turn_in_flight = True
            try:
                for frame in run_turn(self.state, text, backends, self.session.config.pipeline):
                    if isinstance(frame, TurnComplete):
                        self._commit_turn(frame)
                    yield frame
            finally:
                self.turn_in_flight = False

    def _commit_turn(self, frame: TurnComplete) -> None:
        record = frame.record
        user = frame.state.get_message(record.user_message_id)
        assistant = frame.state.get_message(record.response_message_id)
        lines = [
            {"kind": LINE_MESSAGE, "turn": record.turn, "role": user.role, "text": user.text, "id": user.id},
            {"kind": LINE_MESSAGE, "turn": record.turn, "role": assistant.role, "text": assistant.text, "id": assistant.id},
            {"kind": LINE_TURN, "turn": record.turn, "event": record.to_dict()},
        ]
        self._append_lines(lines)
        self.state = frame.state
        self.session.turn = record.turn

    # -- control operations ---------------------------------------------

    def _control(self, kind: str, payload: dict[str, Any]) -> None:
        event = PipelineEvent(turn=self.state.turn, stage=STAGE_CONTROL, kind=kind, payload=payload)
        self._append_lines([{"kind": LINE_CONTROL, "turn": self.state.turn, "event": event.to_dict()}])

    def _guard_turn(self) -> None:
        if self.turn_in_flight:
            raise TurnInFlight(self.session_id)

    def _apply_control(self, kind: str, mutate, payload):
        """Mutate a ledger clone, persist the event, then adopt the clone:
        a storage failure never leaves memory ahead of the log."""
        self._guard_turn()
        work = self.state.ledger.clone()
        result = mutate(work)
        self._control(kind, payload(result))
        self.state.ledger = work
        return result

    def create_goal(self, text: str, goal_type: GoalType):
        return self._apply_control(
            EVENT_GOAL_CREATED,
            lambda ledger: ledger.create_goal(
                text, goal_type, GoalOrigin.user_created(), self.state.turn
            ),
            lambda goal: {"goal_id": goal.id, "text": text, "goal_type": goal_type.value},
        )

    def lock_goal(self, goal_id: str):
        return self._apply_control(
            EVENT_GOAL_LOCKED,
            lambda ledger: ledger.lock_goal(goal_id),
            lambda goal: {"goal_id": goal_id},
        )

    def unlock_goal(self, goal_id: str):
        return self._apply_control(
            EVENT_GOAL_UNLOCKED,
            lambda ledger: ledger.unlock_goal(goal_id),
            lambda goal: {"goal_id": goal_id},
        )

    def complete_goal(self, goal_id: str):
        return self._apply_control(
            EVENT_GOAL_COMPLETED,
            lambda ledger: ledger.complete_goal(goal_id),
            lambda goal: {"goal_id": goal_id},
        )

    def restore_goal(self, goal_id: str):
        return self._apply_control(
            EVENT_GOAL_RESTORED,
            lambda ledger: ledger.restore_goal(goal_id),
            lambda goal: {"goal_id": goal_id},
        )

    def set_pipeline(self, config: PipelineConfig) -> PipelineConfig:
        self._guard_turn()
        config.validate()
        self._control("pipeline_toggled", config.to_dict())
        self.session.config.pipeline = config
        return config

    # -- snapshots and transcripts ----------------------------------------

    def snapshot_at(self, turn: int) -> FoldState:
        """Reconstruct the session as it stood at the end of ``turn``.

        Includes control events issued after that turn committed but
        before the next one started; turn 0 is the post-creation state.
        """
        if turn < 0 or turn > self.session.turn:
            raise TurnOutOfRange(f"turn {turn} outside 0..{self.session.turn}")
        lines = [self._lines[0]] + [l for l in self._lines[1:] if l.get("turn", 0) <= turn]
        return fold_lines(lines)

    def export_transcript(self) -> str:
        """The session as canonical JSONL; line 1 is the version header."""
        return "".join(canonical_json(line) + "\n" for line in self._lines)

    # -- persistence -------------------------------------------------------

    def _append_lines(self, lines: list[dict[str, Any]]) -> None:
        payload = "".join(canonical_json(line) + "\n" for line in lines)
        with self._write_lock:
            try:
                with open(self.store.log_path(self.session_id), "a", encoding="utf-8") as fh:
                    fh.write(payload)
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
            self._lines.extend(lines)


class SessionStore:
    """All sessions under one data directory, one JSONL log each."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._runtimes: dict[str, SessionRuntime] = {}
        self._lock = threading.Lock()

    def log_path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.jsonl"

    def create_session(
        self,
        config: SessionConfig,
        session_id: Optional[str] = None,
        created_at: Optional[str] = None,
    ) -> SessionRuntime:
        config.validate()
        session_id = session_id or f"s{secrets.token_hex(6)}"
        if self.log_path(session_id).exists():
            raise StorageFailure(f"session {session_id} already exists")
        created_at = created_at or datetime.now(timezone.utc).isoformat()
        header = {
            "kind": LINE_HEADER,
            "v": TRANSCRIPT_VERSION,
            "session_id": session_id,
            "created_at": created_at,
            "config": config.to_dict(),
            "turn": 0,
        }
        fold = fold_lines([header])
        runtime = SessionRuntime(self, fold.session, fold.state, [header])
        try:
            with open(self.log_path(session_id), "w", encoding="utf-8") as fh:
                fh.write(canonical_json(header) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        with self._lock:
            self._runtimes[session_id] = runtime
        return runtime

    def open_session(self, session_id: str) -> SessionRuntime:
        with self._lock:
            if session_id in self._runtimes:
                return self._runtimes[session_id]
        path = self.log_path(session_id)
        if not path.exists():
            raise UnknownSession(session_id)
        lines = _read_log(path)
        fold = fold_lines(lines)
        runtime = SessionRuntime(self, fold.session, fold.state, lines)
        with self._lock:
            self._runtimes[session_id] = runtime
        return runtime

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.jsonl"))

    def import_transcript(self, stream: TextIO | str, session_id: Optional[str] = None) -> SessionRuntime:
        """Rebuild a session from an exported transcript.

        The transcript's own session id is kept unless overridden.
        Malformed input reports the offending line number.
        """
        if isinstance(stream, str):
            text = stream
        else:
            text = stream.read()
        lines = parse_transcript(text)
        if session_id:
            lines[0] = dict(lines[0], session_id=session_id)
        try:
            fold = fold_lines(lines)
        except (StorageFailure, InvalidConfig, KeyError, TypeError, ValueError) as exc:
            raise MalformedTranscript(f"transcript does not replay: {exc}", len(lines)) from None
        sid = fold.session.session_id
        if self.log_path(sid).exists():
            raise StorageFailure(f"session {sid} already exists")
        try:
            with open(self.log_path(sid), "w", encoding="utf-8") as fh:
                for line in lines:
                    fh.write(canonical_json(line) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        runtime = SessionRuntime(self, fold.session, fold.state, lines)
        with self._lock:
            self._runtimes[sid] = runtime
        return runtime


def parse_transcript(text: str) -> list[dict[str, Any]]:
    """Parse transcript JSONL, reporting the line number of any defect."""
    lines: list[dict[str, Any]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            raise MalformedTranscript("blank line", number)
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedTranscript(f"invalid JSON ({exc.msg})", number) from None
        if not isinstance(parsed, dict) or "kind" not in parsed:
            raise MalformedTranscript("line is not an event object", number)
        lines.append(parsed)
    if not lines:
        raise MalformedTranscript("empty transcript", 1)
    if lines[0].get("kind") != LINE_HEADER or lines[0].get("v") != TRANSCRIPT_VERSION:
        raise MalformedTranscript("first line must be a v1 header", 1)
    return lines


def _read_log(path: Path) -> list[dict[str, Any]]:
    lines: list[dict[str, Any]] = []
    try:
        with open(path, encoding="utf-8") as fh:
            for number, raw in enumerate(fh, start=1):
                raw = raw.rstrip("\n")
                if not raw:
                    continue
                try:
                    lines.append(json.loads(raw))
                except json.JSONDecodeError as exc:
                    raise StorageFailure(f"{path}:{number}: {exc.msg}") from None
    except OSError as exc:
        raise StorageFailure(str(exc)) from exc
    return lines
