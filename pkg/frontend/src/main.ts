/** App bootstrap: one session, chat on the left, progress panel on the
 * right, message input at the bottom. All state comes from the API. */

import { ApiClient } from "./api.js";
import { TurnStream } from "./model.js";
import {
  renderChat,
  renderEventsTab,
  renderGoalsTab,
  renderGoalView,
  renderTimelineTab,
  scrollToMessage,
} from "./render.js";
import type { SessionState, ViewMode } from "./types.js";

type Tab = "goals" | "timeline" | "events";

const STUDY_GOALS: { text: string; goal_type: string; locked: boolean }[] = [
  { text: "Use non-formal, conversational language", goal_type: "request", locked: true },
  { text: "Use formal and technical language", goal_type: "request", locked: true },
  { text: "Engage storytelling and emotional appeal", goal_type: "suggestion", locked: true },
  { text: "Build credibility through research and evidence", goal_type: "request", locked: true },
  { text: "Include rich imagery and creative metaphors", goal_type: "suggestion", locked: true },
  { text: "Prefer facts over figurative language", goal_type: "request", locked: true },
];

class App {
  client: ApiClient;
  sessionId = "";
  state: SessionState | null = null;
  tab: Tab = "goals";
  selectedGoal: string | null = null;
  viewMode: ViewMode = "eval_examples";

  chatEl = document.getElementById("chat") as HTMLElement;
  panelEl = document.getElementById("panel-content") as HTMLElement;
  inputEl = document.getElementById("message-input") as HTMLInputElement;
  sendEl = document.getElementById("send") as HTMLButtonElement;
  statusEl = document.getElementById("status") as HTMLElement;

  constructor() {
    const params = new URLSearchParams(location.search);
    const base = params.get("api") ?? location.origin;
    this.client = new ApiClient(base);
  }

  async init(): Promise<void> {
    const params = new URLSearchParams(location.search);
    const existing = params.get("session");
    if (existing) {
      this.sessionId = existing;
    } else {
      const session = await this.client.createSession({ preloaded_goals: STUDY_GOALS });
      this.sessionId = session.session_id;
      const url = new URL(location.href);
      url.searchParams.set("session", this.sessionId);
      history.replaceState(null, "", url.toString());
    }
    await this.refresh();

    this.sendEl.addEventListener("click", () => void this.send());
    this.inputEl.addEventListener("keydown", (event) => {
      if (event.key === "Enter" && !event.shiftKey) {
        event.preventDefault();
        void this.send();
      }
    });
    for (const button of document.querySelectorAll<HTMLButtonElement>(".tab")) {
      button.addEventListener("click", () => {
        this.tab = button.dataset.tab as Tab;
        this.selectedGoal = null;
        for (const other of document.querySelectorAll(".tab")) {
          other.classList.toggle("active", other === button);
        }
        void this.renderPanel();
      });
    }
  }

  async refresh(): Promise<void> {
    this.state = await this.client.getState(this.sessionId);
    if (this.selectedGoal) {
      await this.renderGoalView();
    } else {
      renderChat(this.chatEl, this.state, {});
      await this.renderPanel();
    }
  }

  async renderPanel(): Promise<void> {
    if (!this.state) {
      return;
    }
    if (this.tab === "goals") {
      const { goals } = await this.client.getGoals(this.sessionId);
      renderGoalsTab(this.panelEl, goals, {
        onControl: (goalId, action) => void this.control(goalId, action),
        onSelect: (goalId) => {
          this.selectedGoal = goalId;
          void this.renderGoalView();
        },
        onCreate: (text, goalType) =>
          void this.client
            .createGoal(this.sessionId, text, goalType as never)
            .then(() => this.refresh())
            .catch((error) => this.note(String(error))),
      });
    } else if (this.tab === "timeline") {
      const { rows } = await this.client.getTimeline(this.sessionId);
      renderTimelineTab(this.panelEl, rows, (messageId) => scrollToMessage(messageId));
    } else {
      const { groups } = await this.client.getEvents(this.sessionId);
      renderEventsTab(this.panelEl, groups, (messageId) => scrollToMessage(messageId));
    }
  }

  async renderGoalView(): Promise<void> {
    if (!this.selectedGoal) {
      return;
    }
    try {
      const view = await this.client.getGoalView(this.sessionId, this.selectedGoal, this.viewMode);
      renderGoalView(this.chatEl, this.panelEl, view, {
        onMode: (mode) => {
          this.viewMode = mode;
          void this.renderGoalView();
        },
        onEvaluationClick: (messageId) => scrollToMessage(messageId),
        onClose: () => {
          this.selectedGoal = null;
          this.viewMode = "eval_examples";
          void this.refresh();
        },
      });
    } catch (error) {
      this.note(String(error));
    }
  }

  async control(goalId: string, action: "lock" | "unlock" | "complete" | "restore"): Promise<void> {
    try {
      await this.client.goalControl(this.sessionId, goalId, action);
    } catch (error) {
      this.note(String(error)); // 409s roll back below via refresh
    }
    await this.refresh();
  }

  async send(): Promise<void> {
    const text = this.inputEl.value.trim();
    if (!text || !this.state) {
      return;
    }
    this.inputEl.value = "";
    this.sendEl.disabled = true;
    this.note("thinking…");

    // optimistic user bubble + streaming assistant bubble; the glyph rows
    // appear only once the turn completes and state is refetched
    const user = document.createElement("div");
    user.className = "message message-user";
    user.textContent = text;
    this.chatEl.appendChild(user);
    const streaming = document.createElement("div");
    streaming.className = "message message-assistant streaming";
    this.chatEl.appendChild(streaming);

    const turn = new TurnStream();
    try {
      for await (const frame of this.client.streamMessage(this.sessionId, text)) {
        turn.apply(frame);
        if (frame.kind === "chat_chunk") {
          streaming.textContent = turn.streamingText;
        }
      }
      if (turn.error) {
        this.note(`turn failed: ${turn.error.type}: ${turn.error.message}`);
      } else {
        this.note("");
      }
    } catch (error) {
      this.note(String(error));
    } finally {
      this.sendEl.disabled = false;
      await this.refresh();
    }
  }

  note(text: string): void {
    this.statusEl.textContent = text;
  }
}

void new App().init();
