"""Goal ledger: the deterministic state machine behind goal tracking.

Holds every goal ever created, applies merge operations (combine /
replace / keep), enforces the lock/complete/restore controls, and keeps
evaluation records. No LLM calls happen here; the pipeline feeds this
module already-validated operations.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .errors import (
    DoubleConsumption,
    DuplicateEvaluation,
    EmptyGoalText,
    GoalAlreadyActive,
    GoalNotActive,
    IndexOutOfRange,
    UnknownCategory,
    UnknownGoal,
    UnknownGoalType,
)

EXISTING_POOL = "existing"
INFERRED_POOL = "inferred"


class GoalType(str, Enum):
    QUESTION = "question"
    REQUEST = "request"
    OFFER = "offer"
    SUGGESTION = "suggestion"

    @classmethod
    def parse(cls, value: str) -> "GoalType":
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise UnknownGoalType(f"not a goal type: {value!r}") from None


class EvaluationCategory(str, Enum):
    CONFIRM = "confirm"
    CONTRADICT = "contradict"
    IGNORE = "ignore"

    @classmethod
    def parse(cls, value: str) -> "EvaluationCategory":
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise UnknownCategory(f"not an evaluation category: {value!r}") from None


class MergeKind(str, Enum):
    COMBINE = "combine"
    REPLACE = "replace"
    KEEP = "keep"


@dataclass(frozen=True)
class GoalOrigin:
    """Where a goal came from: the pipeline, the user, or session preload."""

    kind: str  # "inferred" | "user_created" | "preloaded"
    turn: Optional[int] = None
    source_message_id: Optional[str] = None
    grounded_span: Optional[tuple[int, int]] = None

    @classmethod
    def inferred(
        cls,
        turn: int,
        source_message_id: Optional[str] = None,
        grounded_span: Optional[tuple[int, int]] = None,
    ) -> "GoalOrigin":
        return cls("inferred", turn, source_message_id, grounded_span)

    @classmethod
    def user_created(cls) -> "GoalOrigin":
        return cls("user_created")

    @classmethod
    def preloaded(cls) -> "GoalOrigin":
        return cls("preloaded")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.turn is not None:
            d["turn"] = self.turn
        if self.source_message_id is not None:
            d["source_message_id"] = self.source_message_id
        if self.grounded_span is not None:
            d["grounded_span"] = list(self.grounded_span)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GoalOrigin":
        span = d.get("grounded_span")
        return cls(
            kind=d["kind"],
            turn=d.get("turn"),
            source_message_id=d.get("source_message_id"),
            grounded_span=tuple(span) if span is not None else None,
        )


@dataclass
class Goal:
    id: str
    text: str
    goal_type: GoalType
    origin: GoalOrigin
    created_turn: int
    locked: bool = False
    completed: bool = False
    superseded_by: Optional[str] = None

    @property
    def active(self) -> bool:
        return self.superseded_by is None and not self.completed

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "goal_type": self.goal_type.value,
            "origin": self.origin.to_dict(),
            "created_turn": self.created_turn,
            "locked": self.locked,
            "completed": self.completed,
            "superseded_by": self.superseded_by,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Goal":
        return cls(
            id=d["id"],
            text=d["text"],
            goal_type=GoalType(d["goal_type"]),
            origin=GoalOrigin.from_dict(d["origin"]),
            created_turn=d["created_turn"],
            locked=d["locked"],
            completed=d["completed"],
            superseded_by=d.get("superseded_by"),
        )


@dataclass(frozen=True)
class PoolRef:
    """1-based reference into one of the two merge pools."""

    pool: str  # EXISTING_POOL | INFERRED_POOL
    index: int

    def __post_init__(self):
        if self.pool not in (EXISTING_POOL, INFERRED_POOL):
            raise ValueError(f"unknown pool: {self.pool!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"pool": self.pool, "index": self.index}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PoolRef":
        return cls(pool=d["pool"], index=d["index"])


@dataclass
class MergeOperation:
    """One combine/replace/keep decision over the two pools.

    combine and replace consume exactly one existing and one inferred
    goal; keep consumes exactly one goal from either pool. Arity is
    enforced at construction so an ill-formed operation cannot exist.
    """

    op_kind: MergeKind
    updated_text: str
    consumed: list[PoolRef]

    def __post_init__(self):
        pools = [ref.pool for ref in self.consumed]
        if self.op_kind in (MergeKind.COMBINE, MergeKind.REPLACE):
            if sorted(pools) != [EXISTING_POOL, INFERRED_POOL]:
                raise ValueError(
                    f"{self.op_kind.value} must consume one existing and one "
                    f"inferred goal, got pools {pools}"
                )
        else:
            if len(pools) != 1:
                raise ValueError(f"keep must consume exactly one goal, got {pools}")

    def existing_ref(self) -> Optional[PoolRef]:
        for ref in self.consumed:
            if ref.pool == EXISTING_POOL:
                return ref
        return None

    def inferred_ref(self) -> Optional[PoolRef]:
        for ref in self.consumed:
            if ref.pool == INFERRED_POOL:
                return ref
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "op_kind": self.op_kind.value,
            "updated_text": self.updated_text,
            "consumed": [ref.to_dict() for ref in self.consumed],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MergeOperation":
        return cls(
            op_kind=MergeKind(d["op_kind"]),
            updated_text=d["updated_text"],
            consumed=[PoolRef.from_dict(r) for r in d["consumed"]],
        )


def combine_op(existing_index: int, inferred_index: int, updated_text: str) -> MergeOperation:
    return MergeOperation(
        MergeKind.COMBINE,
        updated_text,
        [PoolRef(EXISTING_POOL, existing_index), PoolRef(INFERRED_POOL, inferred_index)],
    )


def replace_op(existing_index: int, inferred_index: int, updated_text: str) -> MergeOperation:
    return MergeOperation(
        MergeKind.REPLACE,
        updated_text,
        [PoolRef(EXISTING_POOL, existing_index), PoolRef(INFERRED_POOL, inferred_index)],
    )


def keep_op(pool: str, index: int, text: str = "") -> MergeOperation:
    return MergeOperation(MergeKind.KEEP, text, [PoolRef(pool, index)])


@dataclass
class InferredGoal:
    """A goal candidate produced by inference, not yet in the ledger."""

    text: str
    goal_type: GoalType
    source_message_id: Optional[str] = None
    grounded_span: Optional[tuple[int, int]] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "goal_type": self.goal_type.value,
            "source_message_id": self.source_message_id,
            "grounded_span": list(self.grounded_span) if self.grounded_span else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InferredGoal":
        span = d.get("grounded_span")
        return cls(
            text=d["text"],
            goal_type=GoalType(d["goal_type"]),
            source_message_id=d.get("source_message_id"),
            grounded_span=tuple(span) if span else None,
        )


@dataclass
class EvaluationExample:
    text: str
    grounded_span: Optional[tuple[int, int]] = None
    grounded: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "grounded_span": list(self.grounded_span) if self.grounded_span else None,
            "grounded": self.grounded,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvaluationExample":
        span = d.get("grounded_span")
        return cls(
            text=d["text"],
            grounded_span=tuple(span) if span else None,
            grounded=d["grounded"],
        )


@dataclass
class Evaluation:
    """One (goal, LLM response) judgment with grounded supporting examples."""

    goal_id: str
    message_id: str
    category: EvaluationCategory
    explanation: str
    examples: list[EvaluationExample] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "goal_id": self.goal_id,
            "message_id": self.message_id,
            "category": self.category.value,
            "explanation": self.explanation,
            "examples": [e.to_dict() for e in self.examples],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Evaluation":
        return cls(
            goal_id=d["goal_id"],
            message_id=d["message_id"],
            category=EvaluationCategory(d["category"]),
            explanation=d["explanation"],
            examples=[EvaluationExample.from_dict(e) for e in d["examples"]],
        )


@dataclass
class LineageEdge:
    """Parent -> successor link created by a combine or replace."""

    parent_id: str
    successor_id: str
    op_kind: MergeKind
    turn: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "parent_id": self.parent_id,
            "successor_id": self.successor_id,
            "op_kind": self.op_kind.value,
            "turn": self.turn,
        }


@dataclass
class AppliedMerge:
    """One merge operation as actually applied to the ledger.

    ``inferred_indices`` are 0-based positions in the inferred pool;
    ``inferred_goal_ids`` are the ledger ids those clauses were admitted
    under (parallel lists).
    """

    op: MergeOperation
    existing_goal_ids: list[str]
    inferred_indices: list[int]
    inferred_goal_ids: list[str]
    result_goal_id: str
    synthesized: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "op": self.op.to_dict(),
            "existing_goal_ids": list(self.existing_goal_ids),
            "inferred_indices": list(self.inferred_indices),
            "inferred_goal_ids": list(self.inferred_goal_ids),
            "result_goal_id": self.result_goal_id,
            "synthesized": self.synthesized,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AppliedMerge":
        return cls(
            op=MergeOperation.from_dict(d["op"]),
            existing_goal_ids=list(d["existing_goal_ids"]),
            inferred_indices=list(d["inferred_indices"]),
            inferred_goal_ids=list(d["inferred_goal_ids"]),
            result_goal_id=d["result_goal_id"],
            synthesized=d["synthesized"],
        )


@dataclass
class DroppedOp:
    op: MergeOperation
    reason: str
    locked_goal_id: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "op": self.op.to_dict(),
            "reason": self.reason,
            "locked_goal_id": self.locked_goal_id,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DroppedOp":
        return cls(
            op=MergeOperation.from_dict(d["op"]),
            reason=d["reason"],
            locked_goal_id=d.get("locked_goal_id"),
        )


@dataclass
class MergeOutcome:
    applied: list[AppliedMerge]
    dropped: list[DroppedOp]
    admitted_inferred: dict[int, str]  # inferred pool index (0-based) -> goal id


class GoalLedger:
    """Append-only collection of goals plus lineage and evaluations.

    Active set = goals with no successor and not completed. All mutation
    goes through the methods below; replaying the same calls on a fresh
    ledger reproduces it field for field, including generated ids.
    """

    def __init__(self) -> None:
        self._goals: dict[str, Goal] = {}
        self._lineage: list[LineageEdge] = []
        self._evaluations: list[tuple[int, Evaluation]] = []
        self._eval_keys: set[tuple[str, str]] = set()
        self._next_goal_number = 1

    # -- introspection ----------------------------------------------------

    def __contains__(self, goal_id: str) -> bool:
        return goal_id in self._goals

    def get(self, goal_id: str) -> Goal:
        try:
            return self._goals[goal_id]
        except KeyError:
            raise UnknownGoal(goal_id) from None

    def all_goals(self) -> list[Goal]:
        return list(self._goals.values())

    def active_goals(self) -> list[Goal]:
        """Active goals in creation order."""
        return [g for g in self._goals.values() if g.active]

    def lineage(self) -> list[LineageEdge]:
        return list(self._lineage)

    def evaluations(self) -> list[tuple[int, Evaluation]]:
        return list(self._evaluations)

    def evaluations_for_goal(self, goal_id: str) -> list[tuple[int, Evaluation]]:
        self.get(goal_id)
        return [(t, e) for t, e in self._evaluations if e.goal_id == goal_id]

    def evaluations_for_message(self, message_id: str) -> list[Evaluation]:
        return [e for _, e in self._evaluations if e.message_id == message_id]

    def status_history(self, goal_id: str) -> list[tuple[int, EvaluationCategory]]:
        """(turn, category) per evaluated turn, turn-ascending."""
        rows = self.evaluations_for_goal(goal_id)
        return sorted(((t, e.category) for t, e in rows), key=lambda r: r[0])

    def clone(self) -> "GoalLedger":
        return copy.deepcopy(self)

    # -- mutation ---------------------------------------------------------

    def create_goal(
        self,
        text: str,
        goal_type: GoalType,
        origin: GoalOrigin,
        turn: int,
    ) -> Goal:
        if not text or not text.strip():
            raise EmptyGoalText("goal text must be non-empty")
        goal = Goal(
            id=self._allocate_id(),
            text=text,
            goal_type=goal_type,
            origin=origin,
            created_turn=turn,
        )
        self._goals[goal.id] = goal
        return goal

    def apply_merge(
        self,
        ops: list[MergeOperation],
        inferred: list[InferredGoal],
        turn: int,
        existing: Optional[list[str]] = None,
    ) -> MergeOutcome:
        """Apply merge operations against the existing and inferred pools.

        ``existing`` defaults to the current active goals (creation
        order). Operations referencing a locked goal are dropped and the
        locked goal passes through untouched. Unlocked pool members not
        consumed by any operation get a synthesized keep, so no goal is
        ever silently lost. Raises IndexOutOfRange / DoubleConsumption
        for structurally invalid input; callers validating LLM output
        should sanitize before calling.
        """
        if existing is None:
            pool_goals = self.active_goals()
        else:
            pool_goals = [self.get(gid) for gid in existing]

        for op in ops:
            for ref in op.consumed:
                size = len(pool_goals) if ref.pool == EXISTING_POOL else len(inferred)
                if not 1 <= ref.index <= size:
                    raise IndexOutOfRange(
                        f"{ref.pool} index {ref.index} outside pool of {size}"
                    )

        # locked goals are exempt from merging: drop their ops first, so a
        # surviving op may legitimately re-consume the dropped op's partner
        dropped: list[DroppedOp] = []
        surviving: list[MergeOperation] = []
        for op in ops:
            ex_ref = op.existing_ref()
            if ex_ref is not None and pool_goals[ex_ref.index - 1].locked:
                dropped.append(
                    DroppedOp(op, "locked_goal", pool_goals[ex_ref.index - 1].id)
                )
            else:
                surviving.append(op)

        seen: set[tuple[str, int]] = set()
        for op in surviving:
            for ref in op.consumed:
                key = (ref.pool, ref.index)
                if key in seen:
                    raise DoubleConsumption(f"{ref.pool} goal {ref.index} consumed twice")
                seen.add(key)

        applied: list[AppliedMerge] = []
        admitted: dict[int, str] = {}
        consumed_existing: set[int] = set()
        consumed_inferred: set[int] = set()

        def admit(idx0: int) -> Goal:
            spec = inferred[idx0]
            goal = self.create_goal(
                spec.text,
                spec.goal_type,
                GoalOrigin.inferred(turn, spec.source_message_id, spec.grounded_span),
                turn,
            )
            admitted[idx0] = goal.id
            return goal

        for op in surviving:
            ex_ref = op.existing_ref()
            if op.op_kind == MergeKind.KEEP:
                ref = op.consumed[0]
                if ref.pool == EXISTING_POOL:
                    goal = pool_goals[ref.index - 1]
                    consumed_existing.add(ref.index - 1)
                    applied.append(AppliedMerge(op, [goal.id], [], [], goal.id))
                else:
                    goal = admit(ref.index - 1)
                    consumed_inferred.add(ref.index - 1)
                    applied.append(
                        AppliedMerge(op, [], [ref.index - 1], [goal.id], goal.id)
                    )
            else:
                in_ref = op.inferred_ref()
                assert ex_ref is not None and in_ref is not None
                parent = pool_goals[ex_ref.index - 1]
                inferred_spec = inferred[in_ref.index - 1]
                inferred_goal = admit(in_ref.index - 1)
                text = op.updated_text.strip() or inferred_spec.text
                # combined/replaced goals take the newer goal's type
                successor = self.create_goal(
                    text,
                    inferred_spec.goal_type,
                    GoalOrigin.inferred(
                        turn,
                        inferred_spec.source_message_id,
                        inferred_spec.grounded_span,
                    ),
                    turn,
                )
                parent.superseded_by = successor.id
                inferred_goal.superseded_by = successor.id
                self._lineage.append(
                    LineageEdge(parent.id, successor.id, op.op_kind, turn)
                )
                self._lineage.append(
                    LineageEdge(inferred_goal.id, successor.id, op.op_kind, turn)
                )
                consumed_existing.add(ex_ref.index - 1)
                consumed_inferred.add(in_ref.index - 1)
                applied.append(
                    AppliedMerge(
                        op,
                        [parent.id],
                        [in_ref.index - 1],
                        [inferred_goal.id],
                        successor.id,
                    )
                )

        # synthesized keeps for anything the operations missed
        for idx0, goal in enumerate(pool_goals):
            if idx0 in consumed_existing or goal.locked:
                continue
            op = keep_op(EXISTING_POOL, idx0 + 1, goal.text)
            applied.append(AppliedMerge(op, [goal.id], [], [], goal.id, synthesized=True))
            consumed_existing.add(idx0)
        for idx0, spec in enumerate(inferred):
            if idx0 in consumed_inferred:
                continue
            goal = admit(idx0)
            op = keep_op(INFERRED_POOL, idx0 + 1, spec.text)
            applied.append(
                AppliedMerge(op, [], [idx0], [goal.id], goal.id, synthesized=True)
            )
            consumed_inferred.add(idx0)

        return MergeOutcome(applied, dropped, admitted)

    def lock_goal(self, goal_id: str) -> Goal:
        goal = self._require_active(goal_id)
        goal.locked = True
        return goal

    def unlock_goal(self, goal_id: str) -> Goal:
        goal = self._require_active(goal_id)
        goal.locked = False
        return goal

    def complete_goal(self, goal_id: str) -> Goal:
        goal = self._require_active(goal_id)
        goal.completed = True
        return goal

    def restore_goal(self, goal_id: str) -> Goal:
        """Bring a superseded or completed goal back into the active set.

        Restoring a superseded goal leaves its successor active too; the
        pair may be merged again on a later turn.
        """
        goal = self.get(goal_id)
        if goal.active:
            raise GoalAlreadyActive(goal_id)
        if goal.superseded_by is not None:
            goal.superseded_by = None
        else:
            goal.completed = False
        return goal

    def record_evaluation(self, evaluation: Evaluation, turn: int) -> None:
        self.get(evaluation.goal_id)
        key = (evaluation.goal_id, evaluation.message_id)
        if key in self._eval_keys:
            raise DuplicateEvaluation(f"goal {key[0]} already evaluated on {key[1]}")
        self._eval_keys.add(key)
        self._evaluations.append((turn, evaluation))

    # -- helpers ----------------------------------------------------------

    def _allocate_id(self) -> str:
        goal_id = f"g{self._next_goal_number}"
        self._next_goal_number += 1
        return goal_id

    def _require_active(self, goal_id: str) -> Goal:
        goal = self.get(goal_id)
        if not goal.active:
            raise GoalNotActive(goal_id)
        return goal

    def to_dict(self) -> dict[str, Any]:
        """Full state dump, used for snapshot comparison in tests."""
        return {
            "goals": [g.to_dict() for g in self._goals.values()],
            "lineage": [e.to_dict() for e in self._lineage],
            "evaluations": [
                {"turn": t, "evaluation": e.to_dict()} for t, e in self._evaluations
            ],
        }
