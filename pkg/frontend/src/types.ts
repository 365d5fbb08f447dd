/** Shapes mirrored from the /v1 API. The client renders these verbatim;
 * no goal inference or evaluation logic exists on this side. */

export type GoalTypeName = "question" | "request" | "offer" | "suggestion";
export type Category = "confirm" | "contradict" | "ignore";

export interface GoalOrigin {
  kind: "inferred" | "user_created" | "preloaded";
  turn?: number;
  source_message_id?: string;
  grounded_span?: [number, number] | null;
}

export interface Goal {
  id: string;
  text: string;
  goal_type: GoalTypeName;
  origin: GoalOrigin;
  created_turn: number;
  locked: boolean;
  completed: boolean;
  superseded_by: string | null;
  status_history: { turn: number; category: Category }[];
}

export interface Message {
  id: string;
  role: "user" | "assistant";
  text: string;
  turn: number;
}

export interface InferredClause {
  clause: string;
  goal_type: GoalTypeName;
  summary: string;
  grounded_span: [number, number] | null;
  grounded: boolean;
}

export interface EvaluationExample {
  text: string;
  grounded_span: [number, number] | null;
  grounded: boolean;
}

export interface Evaluation {
  goal_id: string;
  message_id: string;
  category: Category;
  explanation: string;
  examples: EvaluationExample[];
}

export interface PipelineEventData {
  turn: number;
  stage: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface AppliedMergeData {
  op: { op_kind: string; updated_text: string; consumed: { pool: string; index: number }[] };
  existing_goal_ids: string[];
  inferred_indices: number[];
  inferred_goal_ids: string[];
  result_goal_id: string;
  synthesized: boolean;
}

export interface TurnRecord {
  turn: number;
  user_message_id: string;
  response_message_id: string;
  inferred: InferredClause[];
  merge_ops: AppliedMergeData[];
  direct_admissions: { index: number; goal_id: string }[];
  final_goal_ids: string[];
  evaluations: Evaluation[];
  events: PipelineEventData[];
}

export type Frame =
  | { kind: "chat_chunk"; text: string }
  | { kind: "pipeline_event"; event: PipelineEventData }
  | { kind: "turn_complete"; turn: number; record: TurnRecord }
  | { kind: "error"; error: { type: string; message: string } };

export interface NodeRef {
  turn: number;
  row: "inferred" | "final" | "evaluation";
  goal_id: string;
}

export interface TimelineLink {
  source: NodeRef;
  target: NodeRef;
  op_kind: string;
  pass_through?: boolean;
}

export interface TimelineRow {
  turn: number;
  user_message_id: string;
  response_message_id: string;
  kind: "inferred" | "final" | "evaluation";
  nodes: Record<string, unknown>[];
  links: TimelineLink[];
}

export interface EventGroup {
  turn: number;
  user_message_id: string | null;
  response_message_id: string | null;
  events: PipelineEventData[];
}

export type HighlightKind = "eval_example" | "key_phrase" | "similar_pair" | "unique_sentence";

export interface HighlightSpanData {
  message_id: string;
  start: number;
  end: number;
  kind: HighlightKind;
  category?: Category;
  shared?: boolean;
  pair_id?: number;
}

export type ViewMode = "eval_examples" | "key_phrases" | "similar" | "unique";

export interface GoalViewData {
  goal: Goal;
  mode: ViewMode;
  messages: Message[];
  highlights: HighlightSpanData[];
  evaluations: ({ turn: number } & Evaluation)[];
  notice?: string;
}

export interface SessionDescriptor {
  session_id: string;
  created_at: string;
  turn: number;
  config: {
    pipeline: {
      infer_enabled: boolean;
      merge_enabled: boolean;
      evaluate_enabled: boolean;
      evaluation_concurrency_limit: number;
    };
    backend_ref: string;
    preloaded_goals: { text: string; goal_type: GoalTypeName; locked: boolean }[];
  };
}

export interface SessionState {
  session: SessionDescriptor;
  messages: Message[];
  goals: Goal[];
  turn_records: TurnRecord[];
}
