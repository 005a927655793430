import { GatewayClient } from "./api.js";
import { SessionStore } from "./store.js";
import { PlanEditRequest, SessionResource } from "./types.js";

/** Gate actions exactly as the buttons invoke them: one documented gateway
 * POST per user action, then a resource refresh.  The browser shell and the
 * scripted tests share this code path. */
export class GateController {
  constructor(
    readonly client: GatewayClient,
    readonly store: SessionStore,
  ) {}

  async createSession(prompt: string, config: Record<string, unknown> = {}): Promise<SessionResource> {
    const resource = await this.client.createSession(prompt, config);
    await this.store.refreshSession(resource.id);
    this.store.watch(resource.id);
    return resource;
  }

  /** Post one edit_plan intervention per changed attribute, in row order. */
  async savePlanEdits(sessionId: string, edits: PlanEditRequest[]): Promise<void> {
    for (const edit of edits) {
      await this.client.intervene(sessionId, { kind: "edit_plan", edit });
    }
    await this.store.refreshSession(sessionId);
  }

  async approvePlan(sessionId: string): Promise<void> {
    await this.client.intervene(sessionId, { kind: "approve_plan" });
    await this.store.refreshSession(sessionId);
  }

  async overrideReview(sessionId: string, action: "accept" | "retry"): Promise<void> {
    await this.client.intervene(sessionId, { kind: "override_review", action });
    await this.store.refreshSession(sessionId);
  }

  async abort(sessionId: string): Promise<void> {
    await this.client.intervene(sessionId, { kind: "abort" });
    await this.store.refreshSession(sessionId);
  }

  async step(sessionId: string, count = 1): Promise<void> {
    await this.client.step(sessionId, count);
    await this.store.refreshSession(sessionId);
  }

  /** Advance until the pipeline parks at a gate or finishes. */
  async runToGate(sessionId: string): Promise<SessionResource> {
    let resource = await this.store.refreshSession(sessionId);
    while (!resource.state.startsWith("await") && resource.state !== "done" && resource.state !== "failed") {
      await this.client.step(sessionId, 25);
      resource = await this.store.refreshSession(sessionId);
    }
    return resource;
  }
}
