"""One conversational turn: infer goals, merge, chat, evaluate.

Stage order is infer -> merge -> chat completion -> evaluate; each stage
can be toggled off. The whole turn runs against a cloned ledger and is
committed only on success, so any failure before the evaluate stage
leaves session state untouched. Evaluate-stage failures are per goal:
the turn continues and the failure is recorded as a warning event.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterator, Optional

from .backends import Backend, BackendSet, ChatMessage, complete_structured
from .errors import (
    BackendError,
    GoalTrackError,
    InvalidConfig,
    MalformedOutput,
    UnknownCategory,
    UnknownGoalType,
)
from .goals import (
    EXISTING_POOL,
    INFERRED_POOL,
    AppliedMerge,
    Evaluation,
    EvaluationCategory,
    EvaluationExample,
    Goal,
    GoalLedger,
    GoalOrigin,
    GoalType,
    InferredGoal,
    MergeKind,
    MergeOperation,
    PoolRef,
    keep_op,
)
from .grounding import ground_span

log = logging.getLogger(__name__)

STAGE_INFER = "infer"
STAGE_MERGE = "merge"
STAGE_EVALUATE = "evaluate"
STAGE_CONTROL = "control"

_STAGE_ORDER = {STAGE_INFER: 0, STAGE_MERGE: 1, STAGE_EVALUATE: 2}

EVENT_GOAL_INFERRED = "goal_inferred"
EVENT_GOAL_COMBINED = "goal_combined"
EVENT_GOAL_REPLACED = "goal_replaced"
EVENT_GOAL_KEPT = "goal_kept"
EVENT_OP_DROPPED = "op_dropped"
EVENT_GOAL_EVALUATED = "goal_evaluated"
EVENT_GOAL_LOCKED = "goal_locked"
EVENT_GOAL_UNLOCKED = "goal_unlocked"
EVENT_GOAL_COMPLETED = "goal_completed"
EVENT_GOAL_RESTORED = "goal_restored"
EVENT_GOAL_CREATED = "goal_created"
EVENT_STAGE_SKIPPED = "stage_skipped"
EVENT_WARNING = "warning"

_MERGE_EVENT_KIND = {
    MergeKind.COMBINE: EVENT_GOAL_COMBINED,
    MergeKind.REPLACE: EVENT_GOAL_REPLACED,
    MergeKind.KEEP: EVENT_GOAL_KEPT,
}


@dataclass
class PipelineConfig:
    infer_enabled: bool = True
    merge_enabled: bool = True
    evaluate_enabled: bool = True
    evaluation_concurrency_limit: int = 4

    def validate(self) -> "PipelineConfig":
        if self.merge_enabled and not self.infer_enabled:
            raise InvalidConfig("merge requires infer: merging needs inferred goals")
        if self.evaluation_concurrency_limit < 1:
            raise InvalidConfig("evaluation_concurrency_limit must be >= 1")
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "infer_enabled": self.infer_enabled,
            "merge_enabled": self.merge_enabled,
            "evaluate_enabled": self.evaluate_enabled,
            "evaluation_concurrency_limit": self.evaluation_concurrency_limit,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PipelineConfig":
        return cls(
            infer_enabled=d.get("infer_enabled", True),
            merge_enabled=d.get("merge_enabled", True),
            evaluate_enabled=d.get("evaluate_enabled", True),
            evaluation_concurrency_limit=d.get("evaluation_concurrency_limit", 4),
        ).validate()


@dataclass
class InferredClause:
    """A verbatim clause from the user message tagged with a goal type."""

    clause: str
    goal_type: GoalType
    summary: str
    grounded_span: Optional[tuple[int, int]] = None
    grounded: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "clause": self.clause,
            "goal_type": self.goal_type.value,
            "summary": self.summary,
            "grounded_span": list(self.grounded_span) if self.grounded_span else None,
            "grounded": self.grounded,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InferredClause":
        span = d.get("grounded_span")
        return cls(
            clause=d["clause"],
            goal_type=GoalType(d["goal_type"]),
            summary=d["summary"],
            grounded_span=tuple(span) if span else None,
            grounded=d["grounded"],
        )


@dataclass
class PipelineEvent:
    turn: int
    stage: str
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"turn": self.turn, "stage": self.stage, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PipelineEvent":
        return cls(turn=d["turn"], stage=d["stage"], kind=d["kind"], payload=d["payload"])


@dataclass
class Message:
    id: str
    role: str
    text: str
    turn: int

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "role": self.role, "text": self.text, "turn": self.turn}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Message":
        return cls(id=d["id"], role=d["role"], text=d["text"], turn=d["turn"])


@dataclass
class TurnRecord:
    """Everything one user-prompt/LLM-response pair produced."""

    turn: int
    user_message_id: str
    response_message_id: str
    inferred: list[InferredClause] = field(default_factory=list)
    merge_ops: list[AppliedMerge] = field(default_factory=list)
    direct_admissions: list[dict[str, Any]] = field(default_factory=list)
    final_goal_ids: list[str] = field(default_factory=list)
    evaluations: list[Evaluation] = field(default_factory=list)
    events: list[PipelineEvent] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn": self.turn,
            "user_message_id": self.user_message_id,
            "response_message_id": self.response_message_id,
            "inferred": [c.to_dict() for c in self.inferred],
            "merge_ops": [a.to_dict() for a in self.merge_ops],
            "direct_admissions": self.direct_admissions,
            "final_goal_ids": list(self.final_goal_ids),
            "evaluations": [e.to_dict() for e in self.evaluations],
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TurnRecord":
        return cls(
            turn=d["turn"],
            user_message_id=d["user_message_id"],
            response_message_id=d["response_message_id"],
            inferred=[InferredClause.from_dict(c) for c in d["inferred"]],
            merge_ops=[AppliedMerge.from_dict(a) for a in d["merge_ops"]],
            direct_admissions=list(d["direct_admissions"]),
            final_goal_ids=list(d["final_goal_ids"]),
            evaluations=[Evaluation.from_dict(e) for e in d["evaluations"]],
            events=[PipelineEvent.from_dict(e) for e in d["events"]],
        )


@dataclass
class ConversationState:
    """In-memory view of a session: messages, ledger, turn counter."""

    messages: list[Message] = field(default_factory=list)
    ledger: GoalLedger = field(default_factory=GoalLedger)
    turn: int = 0
    next_message_number: int = 1

    def add_message(self, role: str, text: str, turn: int) -> Message:
        message = Message(id=f"m{self.next_message_number}", role=role, text=text, turn=turn)
        self.next_message_number += 1
        self.messages.append(message)
        return message

    def get_message(self, message_id: str) -> Message:
        for m in self.messages:
            if m.id == message_id:
                return m
        raise KeyError(message_id)

    def clone(self) -> "ConversationState":
        return ConversationState(
            messages=list(self.messages),
            ledger=self.ledger.clone(),
            turn=self.turn,
            next_message_number=self.next_message_number,
        )


# --- prompt catalog ------------------------------------------------------

PROMPT_NAMES = ("infer", "merge", "evaluate", "keyphrases")


def load_prompt(name: str) -> str:
    if name not in PROMPT_NAMES:
        raise KeyError(f"unknown prompt: {name}")
    return (resources.files("goaltrack") / "prompts" / f"{name}.txt").read_text(encoding="utf-8")


def render_prompt(name: str, **params: str) -> str:
    """Fill a template's placeholders (and unescape its literal braces)."""
    return load_prompt(name).format(**params)


def render_numbered(items: list[str]) -> str:
    return "\n".join(f"{i}. {text}" for i, text in enumerate(items, start=1))


# --- stages --------------------------------------------------------------


def infer_goals(
    user_message: str,
    backend: Backend,
    *,
    tag: str,
) -> tuple[list[InferredClause], list[dict[str, Any]]]:
    """Extract goal clauses from a user message.

    Returns the clauses plus warning payloads for anything dropped
    (unknown goal type, malformed items). Ungrounded clauses are kept
    and flagged, not dropped.
    """
    if not user_message.strip():
        raise ValueError("user message must be non-empty")
    prompt = render_prompt("infer") + "\n\n" + user_message
    value = complete_structured(backend, prompt, tag=tag)
    if not isinstance(value, dict) or not isinstance(value.get("clauses"), list):
        raise MalformedOutput(f"infer reply missing 'clauses' list", raw_text=repr(value))
    clauses: list[InferredClause] = []
    warnings: list[dict[str, Any]] = []
    for item in value["clauses"]:
        if not isinstance(item, dict) or not str(item.get("clause", "")).strip():
            warnings.append({"reason": "malformed_clause", "item": repr(item)})
            continue
        text = str(item["clause"])
        try:
            goal_type = GoalType.parse(str(item.get("type", "")))
        except UnknownGoalType:
            warnings.append({"reason": "unknown_goal_type", "clause": text, "type": str(item.get("type", ""))})
            continue
        span = ground_span(user_message, text)
        clauses.append(
            InferredClause(
                clause=text,
                goal_type=goal_type,
                summary=str(item.get("summary", "")).strip(),
                grounded_span=span,
                grounded=span is not None,
            )
        )
    return clauses, warnings


def merge_goals(
    existing: list[Goal],
    inferred: list[InferredClause],
    backend: Backend,
    *,
    tag: str,
) -> tuple[list[MergeOperation], list[dict[str, Any]]]:
    """Ask the LLM to merge the two pools; validate what comes back.

    ``existing`` must already exclude locked and completed goals. When
    either pool is empty the result is forced, so the LLM call is
    skipped and keeps are synthesized. Invalid operations (bad name,
    bad index, wrong arity, double consumption) are dropped with a
    warning; unconsumed members get synthesized keeps.
    """
    warnings: list[dict[str, Any]] = []
    ops: list[MergeOperation] = []
    consumed_existing: set[int] = set()
    consumed_inferred: set[int] = set()

    def consume(pool: str, index: int) -> None:
        (consumed_existing if pool == EXISTING_POOL else consumed_inferred).add(index)

    if existing and inferred:
        prompt = render_prompt(
            "merge",
            old_goals_str_list=render_numbered([g.text for g in existing]),
            new_goals_str_list=render_numbered([c.clause for c in inferred]),
        )
        value = complete_structured(backend, prompt, tag=tag)
        if not isinstance(value, dict) or not isinstance(value.get("operations"), list):
            raise MalformedOutput("merge reply missing 'operations' list", raw_text=repr(value))
        for item in value["operations"]:
            op = _parse_merge_op(item, existing, inferred, consumed_existing, consumed_inferred, warnings)
            if op is None:
                continue
            for ref in op.consumed:
                consume(ref.pool, ref.index)
            ops.append(op)

    for i, goal in enumerate(existing, start=1):
        if i not in consumed_existing:
            ops.append(keep_op(EXISTING_POOL, i, goal.text))
    for i, clause in enumerate(inferred, start=1):
        if i not in consumed_inferred:
            ops.append(keep_op(INFERRED_POOL, i, clause.clause))
    return ops, warnings


def _parse_merge_op(
    item: Any,
    existing: list[Goal],
    inferred: list[InferredClause],
    consumed_existing: set[int],
    consumed_inferred: set[int],
    warnings: list[dict[str, Any]],
) -> Optional[MergeOperation]:
    if not isinstance(item, dict):
        warnings.append({"reason": "malformed_operation", "item": repr(item)})
        return None
    name = str(item.get("operation", "")).strip().lower()
    if name not in ("combine", "replace", "keep"):
        warnings.append({"reason": "invalid_operation_name", "operation": name})
        return None
    numbers: list[int] = []
    raw_numbers = item.get("goal_numbers", [])
    if not isinstance(raw_numbers, list):
        raw_numbers = [raw_numbers]
    for n in raw_numbers:
        text = str(n).strip()
        if not text:
            continue
        try:
            numbers.append(int(text))
        except ValueError:
            warnings.append({"reason": "unparseable_goal_number", "operation": name, "value": text})
            return None
    updated = str(item.get("updated_goal", "")).strip()

    if name == "keep":
        if len(numbers) != 1:
            warnings.append({"reason": "bad_arity", "operation": name, "numbers": numbers})
            return None
        # single-number keeps are ambiguous between pools: prefer the old
        # pool, falling back to the new pool when taken or out of bounds
        idx = numbers[0]
        if 1 <= idx <= len(existing) and idx not in consumed_existing:
            return keep_op(EXISTING_POOL, idx, existing[idx - 1].text)
        if 1 <= idx <= len(inferred) and idx not in consumed_inferred:
            return keep_op(INFERRED_POOL, idx, inferred[idx - 1].clause)
        warnings.append({"reason": "unresolvable_keep", "numbers": numbers})
        return None

    if len(numbers) != 2:
        warnings.append({"reason": "bad_arity", "operation": name, "numbers": numbers})
        return None
    old_idx, new_idx = numbers
    if not (1 <= old_idx <= len(existing)) or not (1 <= new_idx <= len(inferred)):
        warnings.append({"reason": "index_out_of_range", "operation": name, "numbers": numbers})
        return None
    if old_idx in consumed_existing or new_idx in consumed_inferred:
        warnings.append({"reason": "double_consumption", "operation": name, "numbers": numbers})
        return None
    kind = MergeKind.COMBINE if name == "combine" else MergeKind.REPLACE
    return MergeOperation(
        kind,
        updated or inferred[new_idx - 1].clause,
        [PoolRef(EXISTING_POOL, old_idx), PoolRef(INFERRED_POOL, new_idx)],
    )


def evaluate_goal(
    goal: Goal,
    response_text: str,
    backend: Backend,
    *,
    tag: str,
    message_id: str,
    user_message: str = "",
) -> tuple[Evaluation, list[dict[str, Any]]]:
    """Judge one LLM response against one goal.

    An unrecognized category falls back to ignore (the neutral
    category) with a warning instead of failing the turn. Examples the
    model claims are quotes get ground-checked against the response;
    misquotes are kept but flagged ungrounded.
    """
    if not goal.active or goal.completed:
        raise ValueError(f"goal {goal.id} is not evaluable")
    if not response_text:
        raise ValueError("response text must be non-empty")
    prompt = render_prompt("evaluate", goal_str=goal.text)
    if user_message:
        prompt += "\n\nHuman dialogue:\n" + user_message
    prompt += "\n\nAssistant response:\n" + response_text
    value = complete_structured(backend, prompt, tag=tag)
    if not isinstance(value, dict):
        raise MalformedOutput("evaluate reply is not an object", raw_text=repr(value))
    warnings: list[dict[str, Any]] = []
    try:
        category = EvaluationCategory.parse(str(value.get("category", "")))
    except UnknownCategory:
        category = EvaluationCategory.IGNORE
        warnings.append({"reason": "unknown_category", "goal_id": goal.id, "category": str(value.get("category", ""))})
    explanation = str(value.get("explanation", "")).strip() or "No explanation provided."
    examples: list[EvaluationExample] = []
    for raw in value.get("examples", []) or []:
        text = str(raw)
        if not text.strip():
            continue
        span = ground_span(response_text, text)
        examples.append(EvaluationExample(text=text, grounded_span=span, grounded=span is not None))
    evaluation = Evaluation(
        goal_id=goal.id,
        message_id=message_id,
        category=category,
        explanation=explanation,
        examples=examples,
    )
    return evaluation, warnings


# --- the full turn -------------------------------------------------------


@dataclass
class StreamChunk:
    text: str


@dataclass
class TurnComplete:
    record: TurnRecord
    state: ConversationState


def run_turn(
    state: ConversationState,
    user_text: str,
    backends: BackendSet,
    config: PipelineConfig,
) -> Iterator[StreamChunk | TurnComplete]:
    """Run one turn, yielding response chunks then a single TurnComplete.

    Works on a clone of ``state``; the caller adopts the returned state
    on completion. If this generator raises, the caller's state is
    untouched.
    """
    if not user_text.strip():
        raise ValueError("cannot send an empty message")
    config.validate()

    work = state.clone()
    turn = work.turn + 1
    events: list[PipelineEvent] = []
    user_msg = work.add_message("user", user_text, turn)

    def event(stage: str, kind: str, payload: dict[str, Any]) -> None:
        events.append(PipelineEvent(turn=turn, stage=stage, kind=kind, payload=payload))

    # infer
    clauses: list[InferredClause] = []
    if config.infer_enabled:
        clauses, warnings = infer_goals(user_text, backends.pipeline, tag=f"infer:{turn}")
        for clause in clauses:
            event(STAGE_INFER, EVENT_GOAL_INFERRED, {
                "clause": clause.clause,
                "goal_type": clause.goal_type.value,
                "summary": clause.summary,
                "grounded": clause.grounded,
                "message_id": user_msg.id,
            })
        for w in warnings:
            event(STAGE_INFER, EVENT_WARNING, w)
    else:
        event(STAGE_INFER, EVENT_STAGE_SKIPPED, {"stage": STAGE_INFER})

    inferred_pool = [
        InferredGoal(
            text=c.clause,
            goal_type=c.goal_type,
            source_message_id=user_msg.id,
            grounded_span=c.grounded_span,
        )
        for c in clauses
    ]

    # merge
    applied_ops: list[AppliedMerge] = []
    direct_admissions: list[dict[str, Any]] = []
    if config.merge_enabled:
        pool = [g for g in work.ledger.active_goals() if not g.locked]
        ops, warnings = merge_goals(pool, clauses, backends.pipeline, tag=f"merge:{turn}")
        for w in warnings:
            event(STAGE_MERGE, EVENT_WARNING, w)
        outcome = work.ledger.apply_merge(
            ops, inferred_pool, turn, existing=[g.id for g in pool]
        )
        applied_ops = outcome.applied
        for dropped in outcome.dropped:
            event(STAGE_MERGE, EVENT_OP_DROPPED, dropped.to_dict())
        for applied in outcome.applied:
            event(STAGE_MERGE, _MERGE_EVENT_KIND[applied.op.op_kind], {
                "result_goal_id": applied.result_goal_id,
                "consumed_goal_ids": applied.existing_goal_ids + applied.inferred_goal_ids,
                "updated_text": applied.op.updated_text,
                "synthesized": applied.synthesized,
            })
    elif config.infer_enabled and clauses:
        for index, spec in enumerate(inferred_pool):
            goal = work.ledger.create_goal(
                spec.text,
                spec.goal_type,
                GoalOrigin.inferred(turn, spec.source_message_id, spec.grounded_span),
                turn,
            )
            direct_admissions.append({"index": index, "goal_id": goal.id})
            event(STAGE_MERGE, EVENT_GOAL_KEPT, {
                "result_goal_id": goal.id,
                "consumed_goal_ids": [],
                "updated_text": goal.text,
                "admitted_without_merge": True,
            })
        event(STAGE_MERGE, EVENT_STAGE_SKIPPED, {"stage": STAGE_MERGE})
    else:
        event(STAGE_MERGE, EVENT_STAGE_SKIPPED, {"stage": STAGE_MERGE})

    final_goals = work.ledger.active_goals()

    # chat completion: only user/assistant history, no goal text injected
    history = [ChatMessage(m.role, m.text) for m in work.messages if m.role in ("user", "assistant")]
    chunks: list[str] = []
    for chunk in backends.chat.complete_chat(history, tag=f"chat:{turn}"):
        chunks.append(chunk)
        yield StreamChunk(chunk)
    response_text = "".join(chunks)
    if not response_text:
        raise BackendError(f"chat backend returned an empty response for turn {turn}")
    response_msg = work.add_message("assistant", response_text, turn)

    # evaluate
    evaluations: list[Evaluation] = []
    if config.evaluate_enabled:
        targets = [g for g in work.ledger.active_goals() if not g.completed]
        results = _evaluate_all(
            targets, response_text, user_text, backends.pipeline, turn,
            response_msg.id, config.evaluation_concurrency_limit,
        )
        for goal, outcome in zip(targets, results):
            if isinstance(outcome, GoalTrackError):
                event(STAGE_EVALUATE, EVENT_WARNING, {
                    "reason": "evaluation_failed",
                    "goal_id": goal.id,
                    "error": type(outcome).__name__,
                    "message": str(outcome),
                })
                continue
            evaluation, warnings = outcome
            for w in warnings:
                event(STAGE_EVALUATE, EVENT_WARNING, w)
            work.ledger.record_evaluation(evaluation, turn)
            evaluations.append(evaluation)
            event(STAGE_EVALUATE, EVENT_GOAL_EVALUATED, {
                "goal_id": evaluation.goal_id,
                "message_id": evaluation.message_id,
                "category": evaluation.category.value,
            })
    else:
        event(STAGE_EVALUATE, EVENT_STAGE_SKIPPED, {"stage": STAGE_EVALUATE})

    work.turn = turn
    record = TurnRecord(
        turn=turn,
        user_message_id=user_msg.id,
        response_message_id=response_msg.id,
        inferred=clauses,
        merge_ops=applied_ops,
        direct_admissions=direct_admissions,
        final_goal_ids=[g.id for g in final_goals],
        evaluations=evaluations,
        events=events,
    )
    yield TurnComplete(record=record, state=work)


def _evaluate_all(
    targets: list[Goal],
    response_text: str,
    user_text: str,
    backend: Backend,
    turn: int,
    message_id: str,
    concurrency: int,
) -> list[tuple[Evaluation, list[dict[str, Any]]] | GoalTrackError]:
    """Fan evaluation calls out, preserving goal order in the results."""

    def run_one(args: tuple[int, Goal]):
        index, goal = args
        try:
            return evaluate_goal(
                goal, response_text, backend,
                tag=f"evaluate:{turn}:{index}",
                message_id=message_id,
                user_message=user_text,
            )
        except GoalTrackError as exc:
            return exc

    jobs = list(enumerate(targets, start=1))
    if not jobs:
        return []
    if concurrency <= 1 or len(jobs) == 1:
        return [run_one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=min(concurrency, len(jobs))) as pool:
        return list(pool.map(run_one, jobs))


def assert_stage_order(events: list[PipelineEvent]) -> None:
    """Events within a turn must respect infer < merge < evaluate."""
    last = -1
    for e in events:
        if e.stage == STAGE_CONTROL:
            continue
        rank = _STAGE_ORDER[e.stage]
        if rank < last:
            raise AssertionError(f"stage order violated at {e}")
        last = rank
