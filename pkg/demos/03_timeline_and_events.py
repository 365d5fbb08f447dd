"""
Timeline rows and the grouped event list
========================================

Runs two turns in an event-sourced session, then prints the structures
the progress panel renders: three timeline rows per turn (inferred goals,
final goals with merge links, evaluation icons) and the pipeline events
grouped per user-prompt/response pair.
"""

import json
import tempfile

from goaltrack import BackendSet, ScriptedMockBackend, SessionConfig, SessionStore
from goaltrack.store import PreloadedGoal
from goaltrack.goals import GoalType
from goaltrack.timeline import build_timeline, group_events

script = {
    "infer:1": json.dumps({"clauses": [
        {"clause": "use a cheerful tone", "type": "request", "summary": "Be cheerful."},
    ]}),
    "merge:1": json.dumps({"operations": [
        {"updated_goal": "", "operation": "keep", "goal_numbers": ["1"]},
        {"updated_goal": "", "operation": "keep", "goal_numbers": ["1"]},
    ]}),
    "chat:1": "Absolutely! Here we go, with a smile.",
    "evaluate:1:1": json.dumps({"category": "confirm", "explanation": "Cheerful indeed.",
                                "examples": ["with a smile"]}),
    "evaluate:1:2": json.dumps({"category": "ignore", "explanation": "Length unaddressed.",
                                "examples": []}),

    "infer:2": json.dumps({"clauses": [
        {"clause": "actually use a serious tone", "type": "request", "summary": "Be serious."},
    ]}),
    # old pool: 1. length goal, 2. cheerful tone; the new tone contradicts #2
    "merge:2": json.dumps({"operations": [
        {"updated_goal": "use a serious tone", "operation": "replace",
         "goal_numbers": ["2", "1"]},
        {"updated_goal": "", "operation": "keep", "goal_numbers": ["1"]},
    ]}),
    "chat:2": "Understood. The matter will be treated with due gravity.",
    "evaluate:2:1": json.dumps({"category": "ignore", "explanation": "Brevity ignored.",
                                "examples": []}),
    "evaluate:2:2": json.dumps({"category": "confirm", "explanation": "Serious now.",
                                "examples": ["due gravity"]}),
}

with tempfile.TemporaryDirectory() as tmp:
    store = SessionStore(tmp)
    config = SessionConfig(
        preloaded_goals=[PreloadedGoal("Keep answers short", GoalType.REQUEST)]
    )
    runtime = store.create_session(config, session_id="demo")
    backends = BackendSet.shared(ScriptedMockBackend(script=script))

    for text in ["use a cheerful tone", "actually use a serious tone"]:
        for _ in runtime.send_message(text, backends):
            pass

    catalog = {g.id: g for g in runtime.state.ledger.all_goals()}
    rows = build_timeline(runtime.turn_records(), catalog)

    print("timeline (three rows per turn):")
    for row in rows:
        heads = []
        for node in row["nodes"]:
            if row["kind"] == "evaluation":
                heads.append(f"{node['goal_id']}:{node['icon']}")
            else:
                heads.append(node.get("goal_id") or "?")
        print(f"  turn {row['turn']} {row['kind']:<10} nodes={heads}")
        for link in row["links"]:
            print(f"      {link['source']['goal_id']} ({link['source']['row']}@t{link['source']['turn']})"
                  f" --{link['op_kind']}--> {link['target']['goal_id']}")

    print("\nevents grouped per prompt/response pair:")
    for group in group_events(runtime.events()):
        print(f"  turn {group['turn']} "
              f"(user={group['user_message_id']}, response={group['response_message_id']}):")
        for event in group["events"]:
            print(f"    [{event['stage']}] {event['kind']}")
