"""Goal ledger: creation, merging, controls, evaluations."""

from __future__ import annotations

import pytest
from hypothesis import given, settings

from goaltrack.errors import (
    DoubleConsumption,
    DuplicateEvaluation,
    EmptyGoalText,
    GoalAlreadyActive,
    GoalNotActive,
    IndexOutOfRange,
    UnknownGoal,
)
from goaltrack.goals import (
    EXISTING_POOL,
    INFERRED_POOL,
    Evaluation,
    EvaluationCategory,
    GoalLedger,
    GoalOrigin,
    GoalType,
    InferredGoal,
    MergeKind,
    MergeOperation,
    PoolRef,
    combine_op,
    keep_op,
    replace_op,
)

from merge_machine import check_invariants, merge_instances


def preloaded(ledger: GoalLedger, text: str, goal_type=GoalType.REQUEST):
    return ledger.create_goal(text, goal_type, GoalOrigin.preloaded(), 0)


class TestCreateGoal:
    def test_preloaded_goal_is_active(self, empty_ledger):
        goal = preloaded(empty_ledger, "Use formal and technical language")
        assert goal.active and not goal.locked and not goal.completed
        assert goal.origin.kind == "preloaded"

    def test_empty_text_rejected(self, empty_ledger):
        with pytest.raises(EmptyGoalText):
            empty_ledger.create_goal("", GoalType.REQUEST, GoalOrigin.user_created(), 1)
        with pytest.raises(EmptyGoalText):
            empty_ledger.create_goal("   ", GoalType.REQUEST, GoalOrigin.user_created(), 1)

    def test_suggestion_preload(self, empty_ledger):
        goal = empty_ledger.create_goal(
            "Include rich imagery and creative metaphors",
            GoalType.SUGGESTION,
            GoalOrigin.preloaded(),
            0,
        )
        assert goal in empty_ledger.active_goals()

    def test_ids_are_sequential(self, empty_ledger):
        a = preloaded(empty_ledger, "one")
        b = preloaded(empty_ledger, "two")
        assert (a.id, b.id) == ("g1", "g2")


class TestApplyMerge:
    def test_replace_supersedes_existing(self, empty_ledger):
        g1 = preloaded(empty_ledger, "use formal language")
        inferred = [InferredGoal("use informal language", GoalType.REQUEST)]
        outcome = empty_ledger.apply_merge(
            [replace_op(1, 1, "use informal language")], inferred, turn=1
        )
        assert g1.superseded_by is not None
        successor = empty_ledger.get(g1.superseded_by)
        assert successor.text == "use informal language"
        assert empty_ledger.active_goals() == [successor]
        assert len(outcome.applied) == 1

    def test_locked_goal_drops_op_and_passes_through(self, empty_ledger):
        g1 = preloaded(empty_ledger, "stay formal")
        empty_ledger.lock_goal(g1.id)
        inferred = [InferredGoal("be casual", GoalType.SUGGESTION)]
        outcome = empty_ledger.apply_merge(
            [replace_op(1, 1, "be casual"), keep_op(INFERRED_POOL, 1)],
            inferred,
            turn=1,
        )
        assert len(outcome.dropped) == 1
        assert outcome.dropped[0].locked_goal_id == g1.id
        active = empty_ledger.active_goals()
        assert g1 in active and g1.superseded_by is None
        assert [g.text for g in active] == ["stay formal", "be casual"]

    def test_keeps_admit_inferred_goals(self, empty_ledger):
        inferred = [
            InferredGoal("goal a", GoalType.QUESTION),
            InferredGoal("goal b", GoalType.OFFER),
        ]
        empty_ledger.apply_merge(
            [keep_op(INFERRED_POOL, 1), keep_op(INFERRED_POOL, 2)], inferred, turn=1
        )
        texts = [g.text for g in empty_ledger.active_goals()]
        assert texts == ["goal a", "goal b"]

    def test_combine_takes_inferred_type(self, empty_ledger):
        preloaded(empty_ledger, "longer story", GoalType.REQUEST)
        inferred = [InferredGoal("longer and happier story", GoalType.SUGGESTION)]
        empty_ledger.apply_merge(
            [combine_op(1, 1, "make the story longer and happier")], inferred, turn=1
        )
        (successor,) = empty_ledger.active_goals()
        assert successor.goal_type is GoalType.SUGGESTION
        assert successor.text == "make the story longer and happier"

    def test_unconsumed_goals_get_synthesized_keeps(self, empty_ledger):
        preloaded(empty_ledger, "existing one")
        inferred = [InferredGoal("new one", GoalType.REQUEST)]
        outcome = empty_ledger.apply_merge([], inferred, turn=1)
        assert all(a.synthesized for a in outcome.applied)
        assert len(outcome.applied) == 2
        assert len(empty_ledger.active_goals()) == 2

    def test_index_out_of_range(self, empty_ledger):
        preloaded(empty_ledger, "only one")
        with pytest.raises(IndexOutOfRange):
            empty_ledger.apply_merge([keep_op(EXISTING_POOL, 2)], [], turn=1)

    def test_double_consumption(self, empty_ledger):
        preloaded(empty_ledger, "only one")
        with pytest.raises(DoubleConsumption):
            empty_ledger.apply_merge(
                [keep_op(EXISTING_POOL, 1), keep_op(EXISTING_POOL, 1)], [], turn=1
            )

    def test_bad_arity_rejected_at_construction(self):
        with pytest.raises(ValueError):
            MergeOperation(
                op_kind=MergeKind.COMBINE,
                updated_text="x",
                consumed=[PoolRef(EXISTING_POOL, 1), PoolRef(EXISTING_POOL, 2)],
            )
        with pytest.raises(ValueError):
            MergeOperation(
                op_kind=MergeKind.KEEP,
                updated_text="x",
                consumed=[PoolRef(EXISTING_POOL, 1), PoolRef(INFERRED_POOL, 1)],
            )


class TestControls:
    def test_lock_blocks_merge(self, empty_ledger):
        g1 = preloaded(empty_ledger, "keep me")
        empty_ledger.lock_goal(g1.id)
        inferred = [InferredGoal("replace you", GoalType.REQUEST)]
        outcome = empty_ledger.apply_merge([replace_op(1, 1, "replace you")], inferred, turn=1)
        assert g1.superseded_by is None
        assert len(outcome.dropped) == 1

    def test_lock_requires_active(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        empty_ledger.apply_merge(
            [replace_op(1, 1, "b")], [InferredGoal("b", GoalType.REQUEST)], turn=1
        )
        with pytest.raises(GoalNotActive):
            empty_ledger.lock_goal(g1.id)

    def test_lock_unknown_goal(self, empty_ledger):
        with pytest.raises(UnknownGoal):
            empty_ledger.lock_goal("g99")

    def test_complete_excludes_from_active(self, empty_ledger):
        g1 = preloaded(empty_ledger, "done soon")
        empty_ledger.complete_goal(g1.id)
        assert empty_ledger.active_goals() == []

    def test_complete_twice_fails(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        empty_ledger.complete_goal(g1.id)
        with pytest.raises(GoalNotActive):
            empty_ledger.complete_goal(g1.id)

    def test_restore_completed(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        empty_ledger.complete_goal(g1.id)
        empty_ledger.restore_goal(g1.id)
        assert g1.active

    def test_restore_superseded_keeps_successor(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        empty_ledger.apply_merge(
            [replace_op(1, 1, "b")], [InferredGoal("b", GoalType.REQUEST)], turn=1
        )
        successor_id = g1.superseded_by
        empty_ledger.restore_goal(g1.id)
        active_ids = [g.id for g in empty_ledger.active_goals()]
        assert g1.id in active_ids and successor_id in active_ids

    def test_restore_active_fails(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        with pytest.raises(GoalAlreadyActive):
            empty_ledger.restore_goal(g1.id)


class TestActiveGoalsAndHistory:
    def test_active_excludes_completed_and_superseded(self, empty_ledger):
        g1 = preloaded(empty_ledger, "one")
        g2 = preloaded(empty_ledger, "two")
        g3 = preloaded(empty_ledger, "three")
        empty_ledger.complete_goal(g2.id)
        empty_ledger.apply_merge(
            [replace_op(2, 1, "four")],
            [InferredGoal("four", GoalType.REQUEST)],
            turn=1,
            existing=[g1.id, g3.id],
        )
        actives = empty_ledger.active_goals()
        assert g1 in actives and g2 not in actives and g3 not in actives

    def test_empty_ledger(self, empty_ledger):
        assert empty_ledger.active_goals() == []

    def test_creation_order(self, empty_ledger):
        names = ["c", "a", "b"]
        for name in names:
            preloaded(empty_ledger, name)
        assert [g.text for g in empty_ledger.active_goals()] == names

    def test_status_history_ordering(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        empty_ledger.record_evaluation(
            Evaluation(g1.id, "m2", EvaluationCategory.CONFIRM, "yes"), turn=1
        )
        empty_ledger.record_evaluation(
            Evaluation(g1.id, "m4", EvaluationCategory.IGNORE, "skipped"), turn=2
        )
        assert empty_ledger.status_history(g1.id) == [
            (1, EvaluationCategory.CONFIRM),
            (2, EvaluationCategory.IGNORE),
        ]

    def test_history_empty_for_unevaluated(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        assert empty_ledger.status_history(g1.id) == []

    def test_history_length_matches_evaluation_count(self, empty_ledger):
        # independent count over the raw ledger rows
        g1 = preloaded(empty_ledger, "a")
        g2 = preloaded(empty_ledger, "b")
        rows = [
            (g1.id, "m2", 1, EvaluationCategory.CONFIRM),
            (g2.id, "m2", 1, EvaluationCategory.IGNORE),
            (g1.id, "m4", 2, EvaluationCategory.CONTRADICT),
        ]
        for goal_id, message_id, turn, category in rows:
            empty_ledger.record_evaluation(
                Evaluation(goal_id, message_id, category, "x"), turn=turn
            )
        expected = sum(1 for r in rows if r[0] == g1.id)
        assert len(empty_ledger.status_history(g1.id)) == expected

    def test_duplicate_evaluation_rejected(self, empty_ledger):
        g1 = preloaded(empty_ledger, "a")
        empty_ledger.record_evaluation(
            Evaluation(g1.id, "m2", EvaluationCategory.CONFIRM, "x"), turn=1
        )
        with pytest.raises(DuplicateEvaluation):
            empty_ledger.record_evaluation(
                Evaluation(g1.id, "m2", EvaluationCategory.IGNORE, "y"), turn=1
            )


class TestMergeProperties:
    @settings(max_examples=200, deadline=None)
    @given(merge_instances())
    def test_merge_invariants(self, instance):
        check_invariants(instance)
