"""
Replaying a transcript and computing conversation statistics
============================================================

Records a three-turn session, exports its transcript, replays it
headlessly with the same mock script, and prints the summary measures:
goals confirmed/contradicted/ignored per turn, and variability (the
total number of per-goal evaluation status changes).

The same flow is available from the command line:

    goaltrack-replay --transcript session.jsonl --mock mock.json --format summary
"""

import json
import tempfile
from pathlib import Path

from goaltrack import BackendSet, ScriptedMockBackend, SessionConfig, SessionStore
from goaltrack.replay import format_summary, replay_transcript

script = {}
texts = ["draft the email", "make it more direct", "add a closing line"]
histories = [["confirm"], ["contradict", "confirm"], ["confirm", "ignore", "confirm"]]
for turn, text in enumerate(texts, start=1):
    script[f"infer:{turn}"] = json.dumps({"clauses": [
        {"clause": text, "type": "request", "summary": f"Do: {text}"},
    ]})
    script[f"chat:{turn}"] = f"Attempt {turn}: {text} done."
    for i, category in enumerate(histories[turn - 1], start=1):
        script[f"evaluate:{turn}:{i}"] = json.dumps(
            {"category": category, "explanation": "Judged.", "examples": []}
        )
    if turn > 1:
        script[f"merge:{turn}"] = json.dumps({"operations": [
            {"updated_goal": "", "operation": "keep", "goal_numbers": [str(i)]}
            for i in range(1, turn)
        ]})

with tempfile.TemporaryDirectory() as tmp:
    store = SessionStore(Path(tmp))
    runtime = store.create_session(SessionConfig(), session_id="email-session")
    backends = BackendSet.shared(ScriptedMockBackend(script=script))
    for text in texts:
        for _ in runtime.send_message(text, backends):
            pass
    transcript = runtime.export_transcript()

report = replay_transcript(transcript, BackendSet.shared(ScriptedMockBackend(script=script)))
print(format_summary(report))

# variability here: g1 confirm->contradict->confirm = 2 changes,
# g2 confirm->ignore = 1, g3 just appeared = 0; total 3
print(f"turn records replayed: {report['turns']}")
print(f"timeline rows: {len(report['timeline'])}")
