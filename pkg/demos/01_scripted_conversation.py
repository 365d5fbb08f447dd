"""
A scripted two-turn conversation
================================

Runs the full pipeline (infer -> merge -> chat -> evaluate) against the
deterministic mock backend and prints what each turn produced: inferred
clauses, merge operations, and per-goal evaluations with the glyph color
each one maps to (green=confirm, red=contradict, yellow=ignore).
"""

import json

from goaltrack import (
    BackendSet,
    ConversationState,
    GoalOrigin,
    GoalType,
    PipelineConfig,
    ScriptedMockBackend,
    StreamChunk,
    TurnComplete,
    run_turn,
)

GLYPH_COLORS = {"confirm": "green", "contradict": "red", "ignore": "yellow"}

# Every LLM call the pipeline will make, keyed by stage and turn.
# Evaluate keys carry the 1-based goal position as well.
script = {
    "infer:1": json.dumps({"clauses": [
        {"clause": "write a short story about a lighthouse",
         "type": "request",
         "summary": "Draft a short lighthouse story."},
    ]}),
    # the preloaded tone goal and the new story request are unrelated: keep both
    "merge:1": json.dumps({"operations": [
        {"updated_goal": "", "operation": "keep", "goal_numbers": ["1"]},
        {"updated_goal": "", "operation": "keep", "goal_numbers": ["1"]},
    ]}),
    "chat:1": "The lighthouse keeper lit the lamp as the storm rolled in. "
              "Waves crashed far below.",
    "evaluate:1:1": json.dumps({
        "category": "confirm",
        "explanation": "A lighthouse story was written.",
        "examples": ["The lighthouse keeper lit the lamp"],
    }),
    "evaluate:1:2": json.dumps({
        "category": "ignore",
        "explanation": "Humor was not attempted.",
        "examples": [],
    }),

    "infer:2": json.dumps({"clauses": [
        {"clause": "make the story funnier",
         "type": "suggestion",
         "summary": "Add humor to the story."},
    ]}),
    # old pool: 1. tone goal, 2. story request; new pool: 1. humor suggestion
    "merge:2": json.dumps({"operations": [
        {"updated_goal": "write a funny short story about a lighthouse",
         "operation": "combine",
         "goal_numbers": ["2", "1"]},
        {"updated_goal": "", "operation": "keep", "goal_numbers": ["1"]},
    ]}),
    "chat:2": "The keeper tripped over his own lantern. The seagulls judged "
              "him silently, as seagulls do.",
    "evaluate:2:1": json.dumps({
        "category": "ignore",
        "explanation": "Humor arrived but the lamp plot was dropped.",
        "examples": [],
    }),
    "evaluate:2:2": json.dumps({
        "category": "confirm",
        "explanation": "The story is now funny.",
        "examples": ["The seagulls judged him silently"],
    }),
}

backends = BackendSet.shared(ScriptedMockBackend(script=script))
config = PipelineConfig()

# one preloaded goal, as a study session would have
state = ConversationState()
state.ledger.create_goal(
    "Keep a consistent tone", GoalType.REQUEST, GoalOrigin.preloaded(), 0
)

for text in ["write a short story about a lighthouse", "make the story funnier"]:
    print(f"\n>>> user: {text}")
    for frame in run_turn(state, text, backends, config):
        if isinstance(frame, StreamChunk):
            print(frame.text, end="")
        elif isinstance(frame, TurnComplete):
            state = frame.state
            record = frame.record
            print(f"\n\n--- turn {record.turn} ---")
            for clause in record.inferred:
                print(f"inferred [{clause.goal_type.value}] {clause.clause!r} "
                      f"(grounded={clause.grounded})")
            for applied in record.merge_ops:
                print(f"merge {applied.op.op_kind.value}: -> {applied.result_goal_id} "
                      f"{'(synthesized keep)' if applied.synthesized else ''}")
            for evaluation in record.evaluations:
                color = GLYPH_COLORS[evaluation.category.value]
                print(f"glyph {evaluation.goal_id}: {color:6} | {evaluation.explanation}")

print("\nFinal active goals:")
for goal in state.ledger.active_goals():
    print(f"  {goal.id}: {goal.text} [{goal.goal_type.value}]")
