"""Shared helpers: scripted-reply builders and turn-running shortcuts."""

from __future__ import annotations

import json
from typing import Any

import pytest

from goaltrack.backends import BackendSet, ScriptedMockBackend
from goaltrack.goals import GoalLedger, GoalOrigin, GoalType
from goaltrack.pipeline import (
    ConversationState,
    PipelineConfig,
    StreamChunk,
    TurnComplete,
    TurnRecord,
    run_turn,
)


def infer_reply(*clauses: tuple[str, str] | tuple[str, str, str]) -> str:
    items = []
    for clause in clauses:
        text, goal_type = clause[0], clause[1]
        summary = clause[2] if len(clause) > 2 else f"Address: {text}"
        items.append({"clause": text, "type": goal_type, "summary": summary})
    return json.dumps({"clauses": items})


def merge_reply(*ops: dict[str, Any]) -> str:
    return json.dumps({"operations": list(ops)})


def eval_reply(category: str, explanation: str = "Because.", examples: list[str] | None = None) -> str:
    return json.dumps(
        {"category": category, "explanation": explanation, "examples": examples or []}
    )


def keyphrase_reply(*phrases: str) -> str:
    return json.dumps({"keyphrases": list(phrases)})


def mock_backends(script: dict[str, Any], embeddings: dict[str, Any] | None = None) -> BackendSet:
    return BackendSet.shared(ScriptedMockBackend(script=script, embeddings=embeddings or {}))


def state_with_goals(*goals: tuple[str, str] | tuple[str, str, bool]) -> ConversationState:
    """Fresh conversation state holding preloaded goals (text, type[, locked])."""
    state = ConversationState()
    for spec in goals:
        text, goal_type = spec[0], spec[1]
        goal = state.ledger.create_goal(text, GoalType(goal_type), GoalOrigin.preloaded(), 0)
        if len(spec) > 2 and spec[2]:
            state.ledger.lock_goal(goal.id)
    return state


def complete_turn(
    state: ConversationState,
    text: str,
    backends: BackendSet,
    config: PipelineConfig | None = None,
) -> tuple[TurnRecord, ConversationState, str]:
    """Drive run_turn to completion; returns (record, new state, response text)."""
    chunks: list[str] = []
    record = None
    new_state = None
    for frame in run_turn(state, text, backends, config or PipelineConfig()):
        if isinstance(frame, StreamChunk):
            chunks.append(frame.text)
        elif isinstance(frame, TurnComplete):
            record, new_state = frame.record, frame.state
    assert record is not None and new_state is not None
    return record, new_state, "".join(chunks)


class FailAt(ScriptedMockBackend):
    """Scripted mock that raises on one configured tag."""

    def __init__(self, script, fail_tag, **kwargs):
        super().__init__(script=script, **kwargs)
        self.fail_tag = fail_tag

    def _lookup(self, tag):
        if tag == self.fail_tag:
            from goaltrack.errors import ProviderTimeout

            raise ProviderTimeout(f"injected failure at {tag}")
        return super()._lookup(tag)


@pytest.fixture
def empty_ledger() -> GoalLedger:
    return GoalLedger()
