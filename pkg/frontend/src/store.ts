import { GatewayClient } from "./api.js";
import { subscribeEvents } from "./sse.js";
import { ConnectionState, SessionResource, SessionSummary, TransitionEvent } from "./types.js";

/** Client-side session state.
 *
 * The store is deliberately dumb: events only tell it *that* something
 * changed; the rendered truth is always re-fetched from the gateway, so a
 * hard refresh and a long-lived tab converge on identical state. */
export class SessionStore {
  summaries: SessionSummary[] = [];
  resources = new Map<string, SessionResource>();
  connection: ConnectionState = "closed";
  connectionDetail = "";
  private listeners = new Set<() => void>();
  private streams = new Map<string, { close: () => void }>();

  constructor(readonly client: GatewayClient) {}

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async refreshBoard(): Promise<void> {
    this.summaries = await this.client.listSessions();
    this.notify();
  }

  async refreshSession(id: string): Promise<SessionResource> {
    const resource = await this.client.getSession(id);
    this.resources.set(id, resource);
    const idx = this.summaries.findIndex((s) => s.id === id);
    const summary: SessionSummary = {
      id: resource.id,
      state: resource.state,
      state_label: resource.state_label,
      revision: resource.plan.revision,
      events: resource.events.length,
      payload_hex: resource.payload_hex,
    };
    if (idx >= 0) this.summaries[idx] = summary;
    else this.summaries.push(summary);
    this.notify();
    return resource;
  }

  /** Open the live stream for one session (idempotent). */
  watch(id: string): void {
    if (this.streams.has(id)) return;
    const stream = subscribeEvents(this.client.eventsUrl(id), {
      onEvent: (event: TransitionEvent) => {
        void this.refreshSession(event.session_id).catch(() => undefined);
      },
      onStatus: (state, detail) => {
        this.connection = state;
        this.connectionDetail = detail ?? "";
        this.notify();
      },
    });
    this.streams.set(id, stream);
  }

  unwatch(id: string): void {
    this.streams.get(id)?.close();
    this.streams.delete(id);
  }

  close(): void {
    for (const [, stream] of this.streams) stream.close();
    this.streams.clear();
  }
}
