"""Derived views: the three-row turn timeline and the grouped event list.

Both are pure functions of stored turn records, so the service and the
replay tool render identical structures for the same session.
"""

from __future__ import annotations

from typing import Any, Mapping

from .goals import EvaluationCategory, Goal, MergeKind
from .pipeline import TurnRecord

ROW_INFERRED = "inferred"
ROW_FINAL = "final"
ROW_EVALUATION = "evaluation"

CATEGORY_ICONS = {
    EvaluationCategory.CONFIRM: "check",
    EvaluationCategory.CONTRADICT: "cross",
    EvaluationCategory.IGNORE: "prohibited",
}


def _node_ref(turn: int, row: str, goal_id: str) -> dict[str, Any]:
    return {"turn": turn, "row": row, "goal_id": goal_id}


def build_timeline(
    records: list[TurnRecord],
    goal_catalog: Mapping[str, Goal],
) -> list[dict[str, Any]]:
    """Three rows per completed turn: inferred, final, evaluation.

    Links land on the final row and carry the merge operation kind.
    Goals that persist without an explicit operation (locked goals pass
    through merging untouched) get a pass-through keep link from their
    previous appearance; goals created by the user or preloaded start
    source-less.
    """
    rows: list[dict[str, Any]] = []
    last_final_turn: dict[str, int] = {}

    for record in sorted(records, key=lambda r: r.turn):
        turn = record.turn
        admitted: dict[int, str] = {}
        for applied in record.merge_ops:
            for index, goal_id in zip(applied.inferred_indices, applied.inferred_goal_ids):
                admitted[index] = goal_id
        for admission in record.direct_admissions:
            admitted[admission["index"]] = admission["goal_id"]

        inferred_nodes = [
            {
                "goal_id": admitted.get(index),
                "clause": clause.clause,
                "goal_type": clause.goal_type.value,
                "grounded": clause.grounded,
            }
            for index, clause in enumerate(record.inferred)
        ]

        final_nodes = []
        for goal_id in record.final_goal_ids:
            goal = goal_catalog.get(goal_id)
            final_nodes.append(
                {
                    "goal_id": goal_id,
                    "text": goal.text if goal else "",
                    "goal_type": goal.goal_type.value if goal else None,
                    "origin": goal.origin.kind if goal else None,
                }
            )

        links: list[dict[str, Any]] = []
        linked_targets: set[str] = set()
        for applied in record.merge_ops:
            target = _node_ref(turn, ROW_FINAL, applied.result_goal_id)
            if applied.result_goal_id in record.final_goal_ids:
                linked_targets.add(applied.result_goal_id)
            for parent_id in applied.existing_goal_ids:
                if applied.op.op_kind == MergeKind.KEEP and parent_id == applied.result_goal_id:
                    if parent_id in last_final_turn:
                        links.append({
                            "source": _node_ref(last_final_turn[parent_id], ROW_FINAL, parent_id),
                            "target": target,
                            "op_kind": MergeKind.KEEP.value,
                        })
                elif parent_id in last_final_turn:
                    links.append({
                        "source": _node_ref(last_final_turn[parent_id], ROW_FINAL, parent_id),
                        "target": target,
                        "op_kind": applied.op.op_kind.value,
                    })
            for inferred_id in applied.inferred_goal_ids:
                links.append({
                    "source": _node_ref(turn, ROW_INFERRED, inferred_id),
                    "target": target,
                    "op_kind": applied.op.op_kind.value,
                })
        for admission in record.direct_admissions:
            goal_id = admission["goal_id"]
            linked_targets.add(goal_id)
            links.append({
                "source": _node_ref(turn, ROW_INFERRED, goal_id),
                "target": _node_ref(turn, ROW_FINAL, goal_id),
                "op_kind": MergeKind.KEEP.value,
            })
        # pass-through links for goals no operation touched this turn
        for goal_id in record.final_goal_ids:
            if goal_id in linked_targets:
                continue
            if goal_id in last_final_turn:
                links.append({
                    "source": _node_ref(last_final_turn[goal_id], ROW_FINAL, goal_id),
                    "target": _node_ref(turn, ROW_FINAL, goal_id),
                    "op_kind": MergeKind.KEEP.value,
                    "pass_through": True,
                })

        evaluation_nodes = [
            {
                "goal_id": evaluation.goal_id,
                "category": evaluation.category.value,
                "icon": CATEGORY_ICONS[evaluation.category],
            }
            for evaluation in record.evaluations
        ]

        common = {
            "turn": turn,
            "user_message_id": record.user_message_id,
            "response_message_id": record.response_message_id,
        }
        rows.append({**common, "kind": ROW_INFERRED, "nodes": inferred_nodes, "links": []})
        rows.append({**common, "kind": ROW_FINAL, "nodes": final_nodes, "links": links})
        rows.append({**common, "kind": ROW_EVALUATION, "nodes": evaluation_nodes, "links": []})

        for goal_id in record.final_goal_ids:
            last_final_turn[goal_id] = turn

    return rows


def group_events(log_lines: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Pipeline and control events grouped per user-prompt/response pair.

    Control events issued between turns attach to the turn they follow
    (group 0 collects anything before the first message).
    """
    groups: dict[int, dict[str, Any]] = {}

    def group_for(turn: int) -> dict[str, Any]:
        if turn not in groups:
            groups[turn] = {
                "turn": turn,
                "user_message_id": None,
                "response_message_id": None,
                "events": [],
            }
        return groups[turn]

    for line in log_lines:
        kind = line.get("kind")
        if kind == "turn":
            record = line["event"]
            group = group_for(record["turn"])
            group["user_message_id"] = record["user_message_id"]
            group["response_message_id"] = record["response_message_id"]
            group["events"].extend(record["events"])
        elif kind == "control":
            group_for(line.get("turn", 0))["events"].append(line["event"])

    return [groups[turn] for turn in sorted(groups)]
