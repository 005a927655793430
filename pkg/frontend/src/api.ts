import {
  ApiError,
  ApiErrorBody,
  InterventionRequest,
  SessionResource,
  SessionSummary,
  TransitionEvent,
} from "./types.js";

/** Thin fetch client for the gateway. Every mutation the UI can perform is
 * one of these documented POSTs; there are no hidden side channels. */
export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    const text = await response.text();
    let body: unknown = null;
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      /* non-JSON error body */
    }
    if (!response.ok) {
      const envelope = body as ApiErrorBody | null;
      throw new ApiError(
        response.status,
        envelope?.error?.code ?? "internal",
        envelope?.error?.message ?? `HTTP ${response.status}`,
      );
    }
    return body as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  async listSessions(): Promise<SessionSummary[]> {
    const body = await this.request<{ sessions: SessionSummary[] }>("/sessions");
    return body.sessions;
  }

  createSession(prompt: string, config: Record<string, unknown> = {}): Promise<SessionResource> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompt, config }),
    });
  }

  getSession(id: string): Promise<SessionResource> {
    return this.request(`/sessions/${id}`);
  }

  async step(id: string, count = 1): Promise<{ events: TransitionEvent[]; session: SessionSummary }> {
    return this.request(`/sessions/${id}/step`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ count }),
    });
  }

  async intervene(
    id: string,
    intervention: InterventionRequest,
  ): Promise<{ event: TransitionEvent; session: SessionSummary }> {
    return this.request(`/sessions/${id}/interventions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(intervention),
    });
  }

  async ledgerText(id: string): Promise<string> {
    const response = await fetch(`${this.baseUrl}/sessions/${id}/ledger`);
    if (!response.ok) throw new ApiError(response.status, "not_found", "no ledger");
    return response.text();
  }

  artifactUrl(id: string, png = true): string {
    return `${this.baseUrl}/sessions/${id}/artifact${png ? "?format=png" : ""}`;
  }

  eventsUrl(id: string): string {
    return `${this.baseUrl}/sessions/${id}/events`;
  }
}
