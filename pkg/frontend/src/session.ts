/** One annotator's session: fetch a task, validate the response locally,
 * submit once, advance only on confirmed acceptance. */

import { CrowdClient } from "./client.js";
import type { JudgmentValue, TaskKind, TaskView } from "./types.js";
import { validateValue } from "./validate.js";

export interface SubmitOutcome {
  /** accepted | task_complete | blocked_client_side | duplicate_ignored |
   *  duplicate_worker | domain_error | network_error | ... */
  status: string;
  reason?: string;
  advanced: boolean;
}

export class AnnotationSession {
  current: TaskView | null = null;
  private inFlight = false;
  private readonly submittedTasks = new Set<string>();

  constructor(
    private readonly client: CrowdClient,
    readonly workerId: string,
  ) {}

  async loadNext(kind: TaskKind | null = null): Promise<TaskView | null> {
    this.current = await this.client.fetchNextTask(kind, this.workerId);
    return this.current;
  }

  /** Validate without submitting; the UI uses this to gate the button. */
  check(value: JudgmentValue): { ok: boolean; reason?: string } {
    if (!this.current) {
      return { ok: false, reason: "no task loaded" };
    }
    return validateValue(this.current.control, value);
  }

  async submit(value: JudgmentValue): Promise<SubmitOutcome> {
    const task = this.current;
    if (!task) {
      return { status: "no_task", advanced: false };
    }
    // Idempotency: one submission per (task, worker), even on double clicks.
    if (this.inFlight || this.submittedTasks.has(task.id)) {
      return { status: "duplicate_ignored", advanced: false };
    }
    const validation = validateValue(task.control, value);
    if (!validation.ok) {
      return { status: "blocked_client_side", reason: validation.reason, advanced: false };
    }

    this.inFlight = true;
    try {
      const response = await this.client.submitJudgment(task.id, this.workerId, value);
      if (response.status === "accepted" || response.status === "task_complete") {
        this.submittedTasks.add(task.id);
        this.current = null;
        return { status: response.status, advanced: true };
      }
      if (response.status === "duplicate_worker") {
        // Server already has this worker's judgment; move along.
        this.submittedTasks.add(task.id);
        this.current = null;
        return { status: response.status, reason: response.reason, advanced: true };
      }
      return { status: response.status, reason: response.reason, advanced: false };
    } catch (error) {
      return { status: "network_error", reason: String(error), advanced: false };
    } finally {
      this.inFlight = false;
    }
  }
}
