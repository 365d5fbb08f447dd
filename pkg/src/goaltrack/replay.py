"""Headless replay of recorded transcripts plus conversation statistics.

Feeds a transcript's user messages back through the goal pipeline
(against a scripted mock or a live provider) and emits a JSON report
with the turn records, timeline rows, and summary statistics: goal
status counts per turn and variability, the total number of per-goal
status changes across the conversation.

Exit codes: 0 success, 2 transcript error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from .backends import BackendConfig, BackendSet, OpenAICompatBackend, ScriptedMockBackend
from .errors import BackendError, GoalTrackError, MalformedTranscript, NoEvaluations
from .pipeline import PipelineConfig, TurnComplete, TurnRecord, run_turn
from .store import LINE_MESSAGE, canonical_json, fold_lines, parse_transcript
from .timeline import build_timeline

REPORT_VERSION = 1


@dataclass
class ConversationStats:
    """The summary measures: per-turn status counts and variability."""

    per_turn: list[dict[str, int]]
    variability: int
    turns: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_turn": self.per_turn,
            "variability": self.variability,
            "turns": self.turns,
        }


def compute_stats(records: list[TurnRecord]) -> ConversationStats:
    """Counts of goals confirmed/contradicted/ignored per turn, plus the
    number of evaluation-status changes summed over goals.

    A goal contributes one change for each pair of consecutive evaluated
    turns whose categories differ.
    """
    evaluated_turns = [r for r in records if r.evaluations]
    if not evaluated_turns:
        raise NoEvaluations("no evaluated turns in this conversation")

    per_turn: list[dict[str, int]] = []
    histories: dict[str, list[tuple[int, str]]] = {}
    for record in sorted(records, key=lambda r: r.turn):
        counts = {"turn": record.turn, "confirm": 0, "contradict": 0, "ignore": 0}
        for evaluation in record.evaluations:
            counts[evaluation.category.value] += 1
            histories.setdefault(evaluation.goal_id, []).append(
                (record.turn, evaluation.category.value)
            )
        per_turn.append(counts)

    variability = 0
    for history in histories.values():
        history.sort(key=lambda pair: pair[0])
        variability += sum(
            1 for a, b in zip(history, history[1:]) if a[1] != b[1]
        )
    return ConversationStats(
        per_turn=per_turn,
        variability=variability,
        turns=len(records),
    )


def replay_transcript(
    transcript_text: str,
    backends: BackendSet,
    stages: Optional[PipelineConfig] = None,
) -> dict[str, Any]:
    """Re-run a transcript's user messages through the pipeline.

    State starts from the transcript's header (preloaded goals
    included); the messages are replayed in order. With a scripted mock
    the result is fully deterministic.
    """
    lines = parse_transcript(transcript_text)
    header = lines[0]
    user_texts = [
        line["text"]
        for line in lines[1:]
        if line.get("kind") == LINE_MESSAGE and line.get("role") == "user"
    ]

    fold = fold_lines([header])
    config = stages if stages is not None else fold.config.pipeline
    config.validate()

    state = fold.state
    records: list[TurnRecord] = []
    for text in user_texts:
        for frame in run_turn(state, text, backends, config):
            if isinstance(frame, TurnComplete):
                records.append(frame.record)
                state = frame.state

    catalog = {g.id: g for g in state.ledger.all_goals()}
    try:
        stats: Optional[dict[str, Any]] = compute_stats(records).to_dict()
    except NoEvaluations:
        stats = None
    return {
        "v": REPORT_VERSION,
        "session_id": header.get("session_id", ""),
        "pipeline": config.to_dict(),
        "turns": len(records),
        "turn_records": [r.to_dict() for r in records],
        "timeline": build_timeline(records, catalog),
        "stats": stats,
    }


def format_summary(report: dict[str, Any]) -> str:
    """Fixed-width human-readable table of the report's statistics."""
    out = [f"session {report['session_id']}: {report['turns']} turn(s)"]
    stats = report.get("stats")
    if stats is None:
        out.append("no evaluations recorded")
        return "\n".join(out) + "\n"
    out.append(f"{'turn':>6} {'confirm':>9} {'contradict':>11} {'ignore':>8}")
    for row in stats["per_turn"]:
        out.append(
            f"{row['turn']:>6} {row['confirm']:>9} {row['contradict']:>11} {row['ignore']:>8}"
        )
    out.append(f"variability (status changes): {stats['variability']}")
    return "\n".join(out) + "\n"


def _load_mock(path: str) -> ScriptedMockBackend:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("mock script must be a JSON object")
    # flat map of "stage:turn[:goal-index]" -> reply; an "embeddings"
    # section is allowed for runs that compute highlights
    embeddings = raw.pop("embeddings", {}) if isinstance(raw.get("embeddings"), dict) else {}
    return ScriptedMockBackend(script=raw, embeddings=embeddings)


def _parse_stages(value: str) -> PipelineConfig:
    wanted = {part.strip() for part in value.split(",") if part.strip()}
    unknown = wanted - {"infer", "merge", "evaluate"}
    if unknown:
        raise ValueError(f"unknown stages: {', '.join(sorted(unknown))}")
    return PipelineConfig(
        infer_enabled="infer" in wanted,
        merge_enabled="merge" in wanted,
        evaluate_enabled="evaluate" in wanted,
    ).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goaltrack-replay",
        description="Replay a recorded transcript through the goal pipeline.",
    )
    parser.add_argument("--transcript", required=True, help="transcript JSONL path")
    parser.add_argument("--mock", help="scripted mock JSON path (deterministic run)")
    parser.add_argument(
        "--backend",
        default=None,
        choices=["mock", "openai"],
        help="backend selector; defaults to mock when --mock is given",
    )
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument(
        "--stages",
        help="comma list of enabled stages, e.g. infer,merge,evaluate",
    )
    parser.add_argument("--format", default="json", choices=["json", "summary"])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    backend_kind = args.backend or ("mock" if args.mock else "openai")
    try:
        if backend_kind == "mock":
            if not args.mock:
                print("--mock <script.json> is required for the mock backend", file=sys.stderr)
                return 2
            backends = BackendSet.shared(_load_mock(args.mock))
        else:
            backends = BackendSet.shared(OpenAICompatBackend(BackendConfig()))
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot load mock script: {exc}", file=sys.stderr)
        return 2

    try:
        with open(args.transcript, encoding="utf-8") as fh:
            transcript_text = fh.read()
    except OSError as exc:
        print(f"cannot read transcript: {exc}", file=sys.stderr)
        return 2

    stages = None
    if args.stages:
        try:
            stages = _parse_stages(args.stages)
        except (ValueError, GoalTrackError) as exc:
            print(f"bad --stages: {exc}", file=sys.stderr)
            return 2

    try:
        report = replay_transcript(transcript_text, backends, stages)
    except MalformedTranscript as exc:
        print(f"transcript error at line {exc.line_number}: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except GoalTrackError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 3

    output = (
        canonical_json(report) + "\n" if args.format == "json" else format_summary(report)
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(output)
    else:
        sys.stdout.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
