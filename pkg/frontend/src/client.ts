/** Thin fetch wrapper over the crowd-service HTTP API. */

import type { JudgmentValue, SubmitResponse, TaskKind, TaskView } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class CrowdClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) {
      headers["X-Phalm-Token"] = this.token;
    }
    return headers;
  }

  /** One open task for this worker, or null when the queue is empty. */
  async fetchNextTask(kind: TaskKind | null, workerId: string): Promise<TaskView | null> {
    const params = new URLSearchParams({ worker: workerId });
    if (kind) {
      params.set("kind", kind);
    }
    const response = await fetch(`${this.baseUrl}/tasks/next?${params}`, {
      headers: this.headers(),
    });
    if (response.status === 204) {
      return null;
    }
    if (!response.ok) {
      throw new ApiError(`fetching next task failed (${response.status})`, response.status);
    }
    return (await response.json()) as TaskView;
  }

  async submitJudgment(
    taskId: string,
    workerId: string,
    value: JudgmentValue,
  ): Promise<SubmitResponse> {
    const response = await fetch(`${this.baseUrl}/tasks/${taskId}/judgments`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify({ worker_id: workerId, value }),
    });
    // Domain errors and duplicates come back as structured JSON with a reason.
    const body = (await response.json()) as SubmitResponse;
    if (!response.ok && !body.status) {
      throw new ApiError(`submission failed (${response.status})`, response.status);
    }
    return body;
  }

  async health(): Promise<{ status: string }> {
    const response = await fetch(`${this.baseUrl}/health`);
    if (!response.ok) {
      throw new ApiError(`health check failed (${response.status})`, response.status);
    }
    return (await response.json()) as { status: string };
  }
}
