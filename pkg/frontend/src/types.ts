/** Wire contract of the gateway. The dashboard has no pipeline logic of its
 * own: everything rendered derives from these resources plus the event
 * stream. */

export interface PlanSubtask {
  id: string;
  kind: "element" | "background" | "layout";
  constraints: Record<string, unknown>;
}

export interface AttemptView {
  number: number;
  score: { value: number; parts: Record<string, number> } | null;
  eta: number;
}

export interface TransitionEvent {
  session_id: string;
  seq: number;
  state_before: string;
  state_after: string;
  summary: string;
  ledger_from: number;
  ledger_to: number;
}

export interface SessionSummary {
  id: string;
  state: string;
  state_label: string;
  revision: number;
  events: number;
  payload_hex: string | null;
}

export interface SessionResource {
  id: string;
  state: string;
  state_label: string;
  current: string | null;
  prompt: string;
  prompt_dsl: string;
  config: Record<string, unknown>;
  plan: { revision: number; subtasks: PlanSubtask[] };
  attempts: Record<string, AttemptView[]>;
  accepted: Record<string, number>;
  retry_grants: Record<string, number>;
  events: TransitionEvent[];
  payload_hex: string | null;
  psnr: number | null;
  failure_reason: string | null;
}

export interface PlanEditRequest {
  op: "set_attribute" | "add_element" | "remove_element" | "reorder";
  target?: string;
  payload?: Record<string, unknown>;
}

export interface InterventionRequest {
  kind: "approve_plan" | "edit_plan" | "override_review" | "set_param" | "resume" | "abort";
  edit?: PlanEditRequest;
  subtask?: string;
  action?: "accept" | "retry";
  path?: string;
  value?: unknown;
}

export interface ApiErrorBody {
  error: { code: string; message: string; detail: Record<string, unknown> };
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

export type ConnectionState = "connecting" | "open" | "retrying" | "closed";
