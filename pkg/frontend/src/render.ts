/** DOM rendering. Everything here consumes API data plus the pure view
 * models; no state lives in the DOM beyond what is on screen. */

import {
  buildChatEntries,
  computeSegments,
  segmentClasses,
  type ChatEntry,
  type Glyph,
} from "./model.js";
import type {
  EventGroup,
  Goal,
  GoalViewData,
  HighlightSpanData,
  SessionState,
  TimelineRow,
  ViewMode,
} from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function scrollToMessage(messageId: string): void {
  const target = document.querySelector(`[data-message-id="${messageId}"]`);
  if (target && typeof (target as HTMLElement).scrollIntoView === "function") {
    (target as HTMLElement).scrollIntoView({ behavior: "smooth", block: "center" });
  }
}

/** Message text with highlight overlays as stacked span layers. */
export function renderMessageText(
  container: HTMLElement,
  text: string,
  spans: HighlightSpanData[],
): void {
  container.textContent = "";
  for (const segment of computeSegments(text.length, spans)) {
    const piece = text.slice(segment.start, segment.end);
    if (segment.layers.length === 0) {
      container.appendChild(document.createTextNode(piece));
    } else {
      const wrap = el("span", ["hl", ...segmentClasses(segment)].join(" "), piece);
      container.appendChild(wrap);
    }
  }
}

export interface ChatHandlers {
  onGlyphClick?: (entry: ChatEntry, glyph: Glyph, messageEl: HTMLElement) => void;
}

function glyphButton(entry: ChatEntry, glyph: Glyph, messageEl: HTMLElement, handlers: ChatHandlers): HTMLElement {
  const button = el("button", `glyph glyph-${glyph.color}`);
  button.title = glyph.goalId ? `${glyph.goalId}: ${glyph.label}` : glyph.label;
  button.textContent = glyph.goalId ?? glyph.label;
  if (glyph.goalId) {
    button.dataset.goalId = glyph.goalId;
  }
  button.addEventListener("click", () => {
    toggleExplanation(entry, glyph, messageEl, button);
    handlers.onGlyphClick?.(entry, glyph, messageEl);
  });
  return button;
}

/** Inline goal explanation under a glyph: why the evaluation (or the
 * inference) happened, with its grounded text lit up in the message. */
function toggleExplanation(
  entry: ChatEntry,
  glyph: Glyph,
  messageEl: HTMLElement,
  button: HTMLElement,
): void {
  const row = button.parentElement as HTMLElement;
  const existing = row.parentElement?.querySelector(".explanation");
  const textEl = messageEl.querySelector(".message-text") as HTMLElement;
  if (existing) {
    existing.remove();
    renderMessageText(textEl, entry.message.text, []);
    if ((existing as HTMLElement).dataset.goalId === glyph.goalId) {
      return; // second click on the same glyph closes the panel
    }
  }
  const panel = el("div", "explanation");
  panel.dataset.goalId = glyph.goalId ?? "";
  const spans: HighlightSpanData[] = [];
  if (glyph.evaluation) {
    panel.appendChild(el("div", "explanation-category", glyph.evaluation.category));
    panel.appendChild(el("div", "explanation-text", glyph.evaluation.explanation));
    const list = el("ul", "example-list");
    for (const example of glyph.evaluation.examples) {
      list.appendChild(el("li", example.grounded ? "grounded" : "ungrounded", example.text));
      if (example.grounded && example.grounded_span) {
        spans.push({
          message_id: entry.message.id,
          start: example.grounded_span[0],
          end: example.grounded_span[1],
          kind: "eval_example",
          category: glyph.evaluation.category,
        });
      }
    }
    panel.appendChild(list);
  } else if (glyph.clause) {
    panel.appendChild(el("div", "explanation-category", `inferred ${glyph.clause.goal_type}`));
    panel.appendChild(el("div", "explanation-text", glyph.clause.summary));
    if (glyph.clause.grounded && glyph.clause.grounded_span) {
      spans.push({
        message_id: entry.message.id,
        start: glyph.clause.grounded_span[0],
        end: glyph.clause.grounded_span[1],
        kind: "eval_example",
      });
    }
  }
  renderMessageText(textEl, entry.message.text, spans);
  row.insertAdjacentElement("afterend", panel);
}

export function renderChat(
  container: HTMLElement,
  state: SessionState,
  handlers: ChatHandlers = {},
): void {
  container.textContent = "";
  for (const entry of buildChatEntries(state)) {
    const wrap = el("div", `message message-${entry.message.role}`);
    wrap.dataset.messageId = entry.message.id;
    wrap.dataset.turn = String(entry.message.turn);
    const body = el("div", "message-text");
    renderMessageText(body, entry.message.text, []);
    wrap.appendChild(body);
    if (entry.glyphs.length > 0) {
      const row = el("div", "glyph-row");
      for (const glyph of entry.glyphs) {
        row.appendChild(glyphButton(entry, glyph, wrap, handlers));
      }
      wrap.appendChild(row);
    }
    container.appendChild(wrap);
  }
}

// --- progress panel: goals tab ---------------------------------------------

export interface GoalsTabHandlers {
  onControl: (goalId: string, action: "lock" | "unlock" | "complete" | "restore") => void;
  onSelect: (goalId: string) => void;
  onCreate: (text: string, goalType: string) => void;
}

function statusDots(goal: Goal): HTMLElement {
  const dots = el("span", "history");
  for (const entry of goal.status_history) {
    const dot = el("span", `dot dot-${entry.category}`);
    dot.title = `turn ${entry.turn}: ${entry.category}`;
    dots.appendChild(dot);
  }
  return dots;
}

export function renderGoalsTab(
  container: HTMLElement,
  goals: Goal[],
  handlers: GoalsTabHandlers,
): void {
  container.textContent = "";
  const list = el("div", "goal-list");
  for (const goal of goals) {
    if (goal.superseded_by) {
      continue; // merged away: reachable through restore on its widget row
    }
    const widget = el("div", "goal-widget" + (goal.completed ? " completed" : ""));
    widget.dataset.goalId = goal.id;
    const title = el("button", "goal-text", `${goal.id} · ${goal.text}`);
    title.addEventListener("click", () => handlers.onSelect(goal.id));
    widget.appendChild(title);
    widget.appendChild(el("span", "goal-type", goal.goal_type));
    if (goal.locked) {
      widget.appendChild(el("span", "badge badge-locked", "locked"));
    }
    if (goal.completed) {
      widget.appendChild(el("span", "badge badge-completed", "completed"));
    }
    widget.appendChild(statusDots(goal));
    const controls = el("div", "goal-controls");
    const actions: ("lock" | "unlock" | "complete" | "restore")[] = goal.completed
      ? ["restore"]
      : [goal.locked ? "unlock" : "lock", "complete"];
    for (const action of actions) {
      const button = el("button", `control control-${action}`, action);
      button.addEventListener("click", () => handlers.onControl(goal.id, action));
      controls.appendChild(button);
    }
    widget.appendChild(controls);
    list.appendChild(widget);
  }
  container.appendChild(list);

  const form = el("div", "new-goal");
  const input = el("input") as HTMLInputElement;
  input.placeholder = "New goal…";
  const select = el("select") as HTMLSelectElement;
  for (const goalType of ["request", "suggestion", "question", "offer"]) {
    const option = el("option", undefined, goalType) as HTMLOptionElement;
    option.value = goalType;
    select.appendChild(option);
  }
  const add = el("button", "control control-add", "add goal");
  add.addEventListener("click", () => {
    if (input.value.trim()) {
      handlers.onCreate(input.value.trim(), select.value);
      input.value = "";
    }
  });
  form.append(input, select, add);
  container.appendChild(form);
}

// --- progress panel: timeline tab -------------------------------------------

const SVG_NS = "http://www.w3.org/2000/svg";
const NODE_GAP = 54;
const ROW_GAP = 34;
const TURN_GAP = 26;
const LEFT_PAD = 70;

export function renderTimelineTab(
  container: HTMLElement,
  rows: TimelineRow[],
  onBrushLink: (messageId: string) => void,
): void {
  container.textContent = "";
  if (rows.length === 0) {
    container.appendChild(el("div", "empty", "No turns yet."));
    return;
  }
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "timeline");

  // lay out nodes top to bottom, three rows per turn
  const positions = new Map<string, { x: number; y: number }>();
  let y = 20;
  let width = 320;
  const rowElements: Element[] = [];
  for (const row of rows) {
    const group = document.createElementNS(SVG_NS, "g");
    group.setAttribute("class", `timeline-row row-${row.kind}`);
    group.setAttribute("data-turn", String(row.turn));
    group.setAttribute("data-kind", row.kind);

    // numbered user/LLM icon: clicking brush-links to the chat message
    const iconMessage = row.kind === "evaluation" ? row.response_message_id : row.user_message_id;
    const icon = document.createElementNS(SVG_NS, "text");
    icon.setAttribute("x", "8");
    icon.setAttribute("y", String(y + 4));
    icon.setAttribute("class", "brush-icon");
    icon.setAttribute("data-message-id", iconMessage);
    icon.textContent = `${row.kind === "evaluation" ? "L" : "U"}${row.turn}`;
    icon.addEventListener("click", () => onBrushLink(iconMessage));
    group.appendChild(icon);

    row.nodes.forEach((node, index) => {
      const x = LEFT_PAD + index * NODE_GAP;
      width = Math.max(width, x + NODE_GAP);
      const goalId = (node.goal_id as string) ?? `?${index}`;
      positions.set(`${row.turn}:${row.kind}:${goalId}`, { x, y });
      if (row.kind === "evaluation") {
        const mark = document.createElementNS(SVG_NS, "text");
        mark.setAttribute("x", String(x));
        mark.setAttribute("y", String(y + 4));
        mark.setAttribute("class", `eval-node icon-${node.icon}`);
        mark.setAttribute("data-goal-id", goalId);
        mark.textContent = node.icon === "check" ? "✓" : node.icon === "cross" ? "✕" : "⦸";
        group.appendChild(mark);
      } else {
        const circle = document.createElementNS(SVG_NS, "circle");
        circle.setAttribute("cx", String(x));
        circle.setAttribute("cy", String(y));
        circle.setAttribute("r", "9");
        circle.setAttribute("class", `goal-node node-${row.kind}`);
        circle.setAttribute("data-goal-id", goalId);
        const label = document.createElementNS(SVG_NS, "title");
        label.textContent = `${goalId}: ${(node.text as string) ?? (node.clause as string) ?? ""}`;
        circle.appendChild(label);
        group.appendChild(circle);
      }
    });
    rowElements.push(group);
    y += row.kind === "evaluation" ? ROW_GAP + TURN_GAP : ROW_GAP;
  }

  // links drawn beneath the nodes
  const linkLayer = document.createElementNS(SVG_NS, "g");
  for (const row of rows) {
    for (const link of row.links) {
      const from = positions.get(`${link.source.turn}:${link.source.row}:${link.source.goal_id}`);
      const to = positions.get(`${link.target.turn}:${link.target.row}:${link.target.goal_id}`);
      if (!from || !to) {
        continue;
      }
      const path = document.createElementNS(SVG_NS, "path");
      path.setAttribute(
        "d",
        `M ${from.x} ${from.y + 9} C ${from.x} ${(from.y + to.y) / 2}, ${to.x} ${(from.y + to.y) / 2}, ${to.x} ${to.y - 9}`,
      );
      path.setAttribute("class", `timeline-link link-${link.op_kind}`);
      linkLayer.appendChild(path);
    }
  }
  svg.appendChild(linkLayer);
  for (const group of rowElements) {
    svg.appendChild(group);
  }
  svg.setAttribute("viewBox", `0 0 ${width} ${y + 10}`);
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(y + 10));
  container.appendChild(svg);
}

// --- progress panel: events tab ----------------------------------------------

export function renderEventsTab(
  container: HTMLElement,
  groups: EventGroup[],
  onBrushLink: (messageId: string) => void,
): void {
  container.textContent = "";
  for (const group of groups) {
    const section = el("section", "event-group");
    const header = el("h3");
    const link = el("button", "brush-icon", `turn ${group.turn}`);
    if (group.user_message_id) {
      const target = group.user_message_id;
      link.addEventListener("click", () => onBrushLink(target));
    }
    header.appendChild(link);
    section.appendChild(header);
    const list = el("ul", "event-list");
    for (const event of group.events) {
      const item = el("li", `event event-${event.kind}`);
      item.textContent = `[${event.stage}] ${event.kind.replaceAll("_", " ")}`;
      const detail = describeEvent(event.payload);
      if (detail) {
        item.textContent += ` — ${detail}`;
      }
      list.appendChild(item);
    }
    section.appendChild(list);
    container.appendChild(section);
  }
}

function describeEvent(payload: Record<string, unknown>): string {
  if (typeof payload.clause === "string") {
    return `"${payload.clause}"`;
  }
  if (typeof payload.result_goal_id === "string") {
    return String(payload.result_goal_id);
  }
  if (typeof payload.goal_id === "string") {
    const category = typeof payload.category === "string" ? `: ${payload.category}` : "";
    return `${payload.goal_id}${category}`;
  }
  return "";
}

// --- individual goal view -------------------------------------------------------

export interface GoalViewHandlers {
  onMode: (mode: ViewMode) => void;
  onEvaluationClick: (messageId: string) => void;
  onClose: () => void;
}

const MODES: { mode: ViewMode; label: string }[] = [
  { mode: "eval_examples", label: "evaluation examples" },
  { mode: "key_phrases", label: "key phrases" },
  { mode: "similar", label: "similar sentences" },
  { mode: "unique", label: "unique sentences" },
];

export function renderGoalView(
  chatContainer: HTMLElement,
  panelContainer: HTMLElement,
  view: GoalViewData,
  handlers: GoalViewHandlers,
): void {
  // filtered chat: only responses evaluated against this goal
  chatContainer.textContent = "";
  const bar = el("div", "goal-view-bar");
  bar.appendChild(el("span", "goal-view-title", `${view.goal.id} · ${view.goal.text}`));
  const close = el("button", "control control-close", "back to chat");
  close.addEventListener("click", () => handlers.onClose());
  bar.appendChild(close);
  const modes = el("div", "mode-toggle");
  for (const { mode, label } of MODES) {
    const button = el("button", "mode" + (mode === view.mode ? " active" : ""), label);
    button.dataset.mode = mode;
    button.addEventListener("click", () => handlers.onMode(mode));
    modes.appendChild(button);
  }
  bar.appendChild(modes);
  chatContainer.appendChild(bar);
  if (view.notice) {
    chatContainer.appendChild(el("div", "notice", view.notice));
  }

  const spansByMessage = new Map<string, HighlightSpanData[]>();
  for (const span of view.highlights) {
    const list = spansByMessage.get(span.message_id) ?? [];
    list.push(span);
    spansByMessage.set(span.message_id, list);
  }
  for (const message of view.messages) {
    const wrap = el("div", "message message-assistant");
    wrap.dataset.messageId = message.id;
    const body = el("div", "message-text");
    renderMessageText(body, message.text, spansByMessage.get(message.id) ?? []);
    wrap.appendChild(body);
    chatContainer.appendChild(wrap);
  }

  // side panel: this goal's evaluations, click scrolls to the response
  panelContainer.textContent = "";
  const list = el("ul", "evaluation-list");
  for (const evaluation of view.evaluations) {
    const item = el("li", `evaluation eval-${evaluation.category}`);
    const jump = el(
      "button",
      "eval-jump",
      `turn ${evaluation.turn} · ${evaluation.category}: ${evaluation.explanation}`,
    );
    jump.dataset.messageId = evaluation.message_id;
    jump.addEventListener("click", () => handlers.onEvaluationClick(evaluation.message_id));
    item.appendChild(jump);
    list.appendChild(item);
  }
  panelContainer.appendChild(list);
}
