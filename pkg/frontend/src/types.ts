/** Shapes served by the crowd-service HTTP API. */

export type TaskKind =
  | "write_event"
  | "write_inference"
  | "judge_validity"
  | "judge_contingency"
  | "judge_time_interval";

export interface ControlOption {
  value: string | number;
  label: string;
}

export type ControlSpec =
  | { type: "free_text" }
  | { type: "choice"; options: ControlOption[] }
  | { type: "ordinal"; options: ControlOption[] };

export interface TaskView {
  id: string;
  kind: TaskKind;
  instructions: string;
  examples: string[];
  target: Record<string, string> | null;
  relation: string | null;
  required_judgments: number;
  control: ControlSpec;
  target_sentences?: string[];
}

export type JudgmentValue = string | number;

export interface SubmitResponse {
  status: "accepted" | "task_complete" | "duplicate_worker" | "domain_error" | string;
  reason?: string;
}
