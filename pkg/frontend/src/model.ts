/** Pure view logic: glyph color mapping, per-message glyph rows, and
 * highlight span segmentation. Kept DOM-free so it is trivially testable. */

import type {
  Category,
  Evaluation,
  HighlightSpanData,
  InferredClause,
  Message,
  SessionState,
  TurnRecord,
} from "./types.js";

/** Fixed mapping from evaluation category to glyph color. */
export const GLYPH_COLORS: Record<Category, string> = {
  confirm: "green",
  contradict: "red",
  ignore: "yellow",
};

/** Inferred-goal glyphs under user messages carry no evaluation yet. */
export const NEUTRAL_COLOR = "neutral";

export const CATEGORY_ICONS: Record<Category, string> = {
  confirm: "check",
  contradict: "cross",
  ignore: "prohibited",
};

export function glyphColor(category: Category | null | undefined): string {
  return category ? GLYPH_COLORS[category] : NEUTRAL_COLOR;
}

export interface Glyph {
  color: string;
  label: string;
  goalId?: string;
  evaluation?: Evaluation;
  clause?: InferredClause;
}

export interface ChatEntry {
  message: Message;
  glyphs: Glyph[];
}

/** Inferred-goal id per clause index, from merge ops or direct admissions. */
function admittedGoalIds(record: TurnRecord): Map<number, string> {
  const ids = new Map<number, string>();
  for (const applied of record.merge_ops) {
    applied.inferred_indices.forEach((index, at) => {
      ids.set(index, applied.inferred_goal_ids[at]);
    });
  }
  for (const admission of record.direct_admissions) {
    ids.set(admission.index, admission.goal_id);
  }
  return ids;
}

/** Pair every message with its glyph row: inferred goals under user
 * messages, evaluated final goals under LLM responses. */
export function buildChatEntries(state: SessionState): ChatEntry[] {
  const byUser = new Map<string, TurnRecord>();
  const byResponse = new Map<string, TurnRecord>();
  for (const record of state.turn_records) {
    byUser.set(record.user_message_id, record);
    byResponse.set(record.response_message_id, record);
  }
  return state.messages.map((message) => {
    const glyphs: Glyph[] = [];
    if (message.role === "user") {
      const record = byUser.get(message.id);
      if (record) {
        const admitted = admittedGoalIds(record);
        record.inferred.forEach((clause, index) => {
          glyphs.push({
            color: NEUTRAL_COLOR,
            label: clause.goal_type,
            goalId: admitted.get(index),
            clause,
          });
        });
      }
    } else {
      const record = byResponse.get(message.id);
      if (record) {
        for (const evaluation of record.evaluations) {
          glyphs.push({
            color: glyphColor(evaluation.category),
            label: evaluation.category,
            goalId: evaluation.goal_id,
            evaluation,
          });
        }
      }
    }
    return { message, glyphs };
  });
}

export interface Segment {
  start: number;
  end: number;
  layers: HighlightSpanData[];
}

/** Partition [0, length) at every span boundary. Each segment carries the
 * spans covering it, so overlaps render as stacked layers instead of
 * nested backgrounds. */
export function computeSegments(length: number, spans: HighlightSpanData[]): Segment[] {
  const cuts = new Set<number>([0, length]);
  for (const span of spans) {
    cuts.add(Math.max(0, Math.min(length, span.start)));
    cuts.add(Math.max(0, Math.min(length, span.end)));
  }
  const points = [...cuts].sort((a, b) => a - b);
  const segments: Segment[] = [];
  for (let i = 0; i + 1 < points.length; i += 1) {
    const [start, end] = [points[i], points[i + 1]];
    if (start >= end) {
      continue;
    }
    const layers = spans.filter((span) => span.start <= start && end <= span.end);
    segments.push({ start, end, layers });
  }
  return segments;
}

/** CSS classes for one segment's highlight layers. */
export function segmentClasses(segment: Segment): string[] {
  const classes: string[] = [];
  segment.layers.forEach((span, depth) => {
    classes.push(`hl-${span.kind}`);
    if (span.category) {
      classes.push(`hl-cat-${span.category}`);
    }
    if (span.kind === "key_phrase") {
      classes.push(span.shared ? "hl-shared" : "hl-unique-phrase");
    }
    if (span.pair_id !== undefined) {
      classes.push(`hl-pair-${span.pair_id}`);
    }
    if (depth > 0) {
      classes.push(`hl-layer-${depth}`);
    }
  });
  return classes;
}

/** Reducer over stream frames: accumulates the streaming response text and
 * reports when the turn finished or failed. */
export class TurnStream {
  streamingText = "";
  record: TurnRecord | null = null;
  error: { type: string; message: string } | null = null;

  apply(frame: import("./types.js").Frame): void {
    if (frame.kind === "chat_chunk") {
      this.streamingText += frame.text;
    } else if (frame.kind === "turn_complete") {
      this.record = frame.record;
    } else if (frame.kind === "error") {
      this.error = frame.error;
    }
  }

  get done(): boolean {
    return this.record !== null || this.error !== null;
  }
}
