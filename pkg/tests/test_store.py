"""Session store: event-sourced persistence, snapshots, transcripts."""

from __future__ import annotations

import json

import pytest

from conftest import eval_reply, infer_reply, merge_reply
from goaltrack.backends import BackendSet, ScriptedMockBackend
from goaltrack.errors import (
    InvalidConfig,
    MalformedTranscript,
    StorageFailure,
    TurnOutOfRange,
)
from goaltrack.goals import GoalType
from goaltrack.pipeline import PipelineConfig, TurnComplete
from goaltrack.store import (
    PreloadedGoal,
    SessionConfig,
    SessionStore,
    canonical_json,
    parse_transcript,
)

STUDY_GOALS = [
    "Use non-formal, conversational language",
    "Use formal and technical language",
    "Engage storytelling and emotional appeal",
    "Build credibility through research and evidence",
    "Include rich imagery and creative metaphors",
    "Prefer facts over figurative language",
]


def study_config(locked: bool = True, **pipeline_kwargs) -> SessionConfig:
    return SessionConfig(
        pipeline=PipelineConfig(**pipeline_kwargs),
        preloaded_goals=[
            PreloadedGoal(text, GoalType.REQUEST, locked=locked) for text in STUDY_GOALS
        ],
    )


def two_turn_script() -> dict:
    return {
        "infer:1": infer_reply(("plan a weekend trip", "request")),
        "chat:1": "Here is a draft itinerary. Pack light.",
        "evaluate:1:1": eval_reply("confirm", "Trip planned.", ["draft itinerary"]),
        "infer:2": infer_reply(("make it cheaper", "suggestion")),
        "merge:2": merge_reply(
            {
                "updated_goal": "plan a cheap weekend trip",
                "operation": "combine",
                "goal_numbers": ["1", "1"],
            }
        ),
        "chat:2": "Here is a budget version. Skip the hotel.",
        "evaluate:2:1": eval_reply("confirm", "Cheaper now.", ["budget version"]),
    }


def drive(runtime, backends, text):
    record = None
    for frame in runtime.send_message(text, backends):
        if isinstance(frame, TurnComplete):
            record = frame.record
    assert record is not None
    return record


class TestCreateSession:
    def test_preloaded_locked_goals(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(study_config())
        actives = runtime.state.ledger.active_goals()
        assert [g.text for g in actives] == STUDY_GOALS
        assert all(g.locked for g in actives)

    def test_default_config_empty_ledger(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(SessionConfig())
        assert runtime.state.ledger.all_goals() == []

    def test_empty_goal_text_rejected(self, tmp_path):
        with pytest.raises(InvalidConfig):
            SessionConfig.from_dict(
                {"preloaded_goals": [{"text": "", "goal_type": "request"}]}
            )

    def test_merge_without_infer_rejected(self):
        with pytest.raises(InvalidConfig):
            SessionConfig.from_dict(
                {"pipeline": {"infer_enabled": False, "merge_enabled": True}}
            )


class TestEventLog:
    def test_appends_are_contiguous_and_durable(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(SessionConfig(), session_id="t1")
        backends = BackendSet.shared(ScriptedMockBackend(script=two_turn_script()))
        drive(runtime, backends, "plan a weekend trip")
        length_before = runtime.log_length()
        runtime2 = SessionStore(tmp_path).open_session("t1")  # fresh process view
        assert runtime2.log_length() == length_before

    def test_replay_reproduces_state(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(SessionConfig(), session_id="t2")
        backends = BackendSet.shared(ScriptedMockBackend(script=two_turn_script()))
        drive(runtime, backends, "plan a weekend trip")
        drive(runtime, backends, "make it cheaper")
        goal = runtime.state.ledger.active_goals()[0]
        runtime.lock_goal(goal.id)

        reread = SessionStore(tmp_path).open_session("t2")
        assert reread.state.ledger.to_dict() == runtime.state.ledger.to_dict()
        assert [m.to_dict() for m in reread.state.messages] == [
            m.to_dict() for m in runtime.state.messages
        ]
        assert reread.session.turn == runtime.session.turn

    def test_failed_append_leaves_log_and_state_unchanged(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(study_config(locked=False), session_id="t4")
        goal = runtime.state.ledger.active_goals()[0]
        length_before = runtime.log_length()
        # swap the log path for a directory so the append's open() fails
        log = store.log_path("t4")
        log.unlink()
        log.mkdir()
        with pytest.raises(StorageFailure):
            runtime.lock_goal(goal.id)
        assert runtime.log_length() == length_before
        assert runtime.state.ledger.get(goal.id).locked is False

    def test_control_events_survive_replay(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(study_config(locked=False), session_id="t3")
        goals = runtime.state.ledger.active_goals()
        runtime.complete_goal(goals[0].id)
        runtime.lock_goal(goals[1].id)
        runtime.restore_goal(goals[0].id)
        runtime.create_goal("A fresh user goal", GoalType.SUGGESTION)

        reread = SessionStore(tmp_path).open_session("t3")
        assert reread.state.ledger.to_dict() == runtime.state.ledger.to_dict()


class TestSnapshots:
    def _session(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(study_config(), session_id="snap")
        backends = BackendSet.shared(ScriptedMockBackend(script=self._script()))
        return runtime, backends

    def _script(self):
        script = {}
        for turn in (1, 2, 3):
            script[f"infer:{turn}"] = infer_reply((f"request number {turn}", "request"))
            script[f"chat:{turn}"] = f"Response for turn {turn}."
            for i in range(1, 6 + turn + 1):
                script[f"evaluate:{turn}:{i}"] = eval_reply("confirm", "ok")
            if turn > 1:
                keeps = [
                    {"updated_goal": "", "operation": "keep", "goal_numbers": [str(i)]}
                    for i in range(1, turn)
                ]
                script[f"merge:{turn}"] = merge_reply(*keeps)
        return script

    def test_snapshot_matches_checkpoints_taken_during_run(self, tmp_path):
        runtime, backends = self._session(tmp_path)
        checkpoints = {0: runtime.state.ledger.to_dict()}
        for turn, text in enumerate(["one", "two", "three"], start=1):
            drive(runtime, backends, text)
            checkpoints[turn] = runtime.state.ledger.to_dict()
        for turn, expected in checkpoints.items():
            fold = runtime.snapshot_at(turn)
            assert fold.state.ledger.to_dict() == expected, f"snapshot {turn} diverged"

    def test_snapshot_zero_is_post_creation(self, tmp_path):
        runtime, backends = self._session(tmp_path)
        drive(runtime, backends, "one")
        fold = runtime.snapshot_at(0)
        assert [g.text for g in fold.state.ledger.active_goals()] == STUDY_GOALS
        assert fold.state.messages == []

    def test_snapshot_final_equals_live(self, tmp_path):
        runtime, backends = self._session(tmp_path)
        drive(runtime, backends, "one")
        drive(runtime, backends, "two")
        fold = runtime.snapshot_at(runtime.session.turn)
        assert fold.state.ledger.to_dict() == runtime.state.ledger.to_dict()
        assert len(fold.state.messages) == len(runtime.state.messages)

    def test_out_of_range(self, tmp_path):
        runtime, _ = self._session(tmp_path)
        with pytest.raises(TurnOutOfRange):
            runtime.snapshot_at(5)
        with pytest.raises(TurnOutOfRange):
            runtime.snapshot_at(-1)


class TestTranscripts:
    def test_round_trip_is_byte_identical(self, tmp_path):
        store = SessionStore(tmp_path / "a")
        runtime = store.create_session(SessionConfig(), session_id="rt")
        backends = BackendSet.shared(ScriptedMockBackend(script=two_turn_script()))
        drive(runtime, backends, "plan a weekend trip")
        drive(runtime, backends, "make it cheaper")
        goal = runtime.state.ledger.active_goals()[0]
        runtime.complete_goal(goal.id)

        exported = runtime.export_transcript()
        other_store = SessionStore(tmp_path / "b")
        imported = other_store.import_transcript(exported)
        assert imported.export_transcript() == exported
        assert imported.state.ledger.to_dict() == runtime.state.ledger.to_dict()

    def test_empty_session_is_header_only(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(SessionConfig(), session_id="empty")
        lines = runtime.export_transcript().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["kind"] == "header"

    def test_truncated_line_reports_line_number(self, tmp_path):
        store = SessionStore(tmp_path / "a")
        runtime = store.create_session(SessionConfig(), session_id="bad")
        backends = BackendSet.shared(ScriptedMockBackend(script=two_turn_script()))
        drive(runtime, backends, "plan a weekend trip")
        exported = runtime.export_transcript()
        truncated = exported[: exported.rindex("{") + 10]
        with pytest.raises(MalformedTranscript) as excinfo:
            SessionStore(tmp_path / "b").import_transcript(truncated)
        assert excinfo.value.line_number == len(exported.splitlines())

    def test_header_required(self):
        with pytest.raises(MalformedTranscript):
            parse_transcript(canonical_json({"kind": "message"}) + "\n")

    def test_duplicate_session_id_rejected(self, tmp_path):
        store = SessionStore(tmp_path)
        runtime = store.create_session(SessionConfig(), session_id="dupe")
        with pytest.raises(StorageFailure):
            store.import_transcript(runtime.export_transcript())
