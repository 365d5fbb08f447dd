/** Thin client over the /v1 HTTP API, including the NDJSON turn stream. */

import type {
  EventGroup,
  Frame,
  Goal,
  GoalTypeName,
  GoalViewData,
  SessionDescriptor,
  SessionState,
  TimelineRow,
  ViewMode,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public errorType: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof globalThis.fetch;

async function raise(response: Response): Promise<never> {
  let type = "HttpError";
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = await response.json();
    if (body && body.error) {
      type = body.error.type ?? type;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status line
  }
  throw new ApiError(response.status, type, message);
}

export class ApiClient {
  private fetchImpl: FetchLike;

  constructor(
    public baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? globalThis.fetch.bind(globalThis);
  }

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + "/v1" + path;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.url(path), {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      await raise(response);
    }
    return (await response.json()) as T;
  }

  createSession(body: Record<string, unknown>): Promise<SessionDescriptor> {
    return this.request("POST", "/sessions", body);
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sessionId}/state`);
  }

  getGoals(sessionId: string): Promise<{ goals: Goal[] }> {
    return this.request("GET", `/sessions/${sessionId}/goals`);
  }

  getTimeline(sessionId: string): Promise<{ rows: TimelineRow[] }> {
    return this.request("GET", `/sessions/${sessionId}/timeline`);
  }

  getEvents(sessionId: string): Promise<{ groups: EventGroup[] }> {
    return this.request("GET", `/sessions/${sessionId}/events`);
  }

  getGoalView(
    sessionId: string,
    goalId: string,
    mode: ViewMode,
    k = 5,
    m = 2,
  ): Promise<GoalViewData> {
    return this.request(
      "GET",
      `/sessions/${sessionId}/goals/${goalId}/view?mode=${mode}&k=${k}&m=${m}`,
    );
  }

  goalControl(
    sessionId: string,
    goalId: string,
    action: "lock" | "unlock" | "complete" | "restore",
  ): Promise<Goal> {
    return this.request("POST", `/sessions/${sessionId}/goals/${goalId}/${action}`);
  }

  createGoal(sessionId: string, text: string, goalType: GoalTypeName): Promise<Goal> {
    return this.request("POST", `/sessions/${sessionId}/goals`, {
      text,
      goal_type: goalType,
    });
  }

  patchPipeline(
    sessionId: string,
    toggles: Partial<{ infer: boolean; merge: boolean; evaluate: boolean }>,
  ): Promise<Record<string, unknown>> {
    return this.request("PATCH", `/sessions/${sessionId}/pipeline`, toggles);
  }

  /** POST a user message and yield stream frames as they arrive. */
  async *streamMessage(sessionId: string, text: string): AsyncGenerator<Frame> {
    const response = await this.fetchImpl(this.url(`/sessions/${sessionId}/messages`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
    if (!response.ok) {
      await raise(response);
    }
    if (!response.body) {
      throw new ApiError(0, "NoBody", "streaming response had no body");
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        break;
      }
      buffer += decoder.decode(value, { stream: true });
      let newline = buffer.indexOf("\n");
      while (newline >= 0) {
        const line = buffer.slice(0, newline).trim();
        buffer = buffer.slice(newline + 1);
        if (line) {
          yield JSON.parse(line) as Frame;
        }
        newline = buffer.indexOf("\n");
      }
    }
    const rest = buffer.trim();
    if (rest) {
      yield JSON.parse(rest) as Frame;
    }
  }
}
