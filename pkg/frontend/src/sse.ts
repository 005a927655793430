import { ConnectionState, TransitionEvent } from "./types.js";

/** Incremental SSE frame parser.  Feed it raw chunks; it yields complete
 * events and remembers the last id so a reconnect can resume. */
export class SseParser {
  private buffer = "";
  lastEventId: string | null = null;

  push(chunk: string): { event: string; data: string; id: string | null }[] {
    this.buffer += chunk;
    const frames: { event: string; data: string; id: string | null }[] = [];
    let boundary: number;
    // Events are separated by a blank line.
    while ((boundary = this.buffer.indexOf("\n\n")) !== -1) {
      const raw = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      let event = "message";
      let id: string | null = null;
      const data: string[] = [];
      for (const line of raw.split("\n")) {
        if (line.startsWith(":")) continue; // comment / keepalive
        const colon = line.indexOf(":");
        if (colon === -1) continue;
        const field = line.slice(0, colon);
        const value = line.slice(colon + 1).replace(/^ /, "");
        if (field === "event") event = value;
        else if (field === "data") data.push(value);
        else if (field === "id") id = value;
      }
      if (data.length === 0) continue;
      if (id !== null) this.lastEventId = id;
      frames.push({ event, data: data.join("\n"), id });
    }
    return frames;
  }
}

export interface EventStreamOptions {
  onEvent: (event: TransitionEvent) => void;
  onStatus?: (state: ConnectionState, detail?: string) => void;
  /** Resume point; the parser keeps it updated across reconnects. */
  lastEventId?: string | null;
  /** Base backoff in ms, doubled per consecutive failure (cap 30 s). */
  retryBaseMs?: number;
}

/** Subscribe to a session's transition stream with automatic resume.
 *
 * Uses fetch streaming rather than EventSource so the same code runs in the
 * browser and under node; reconnects send Last-Event-ID so no event is
 * delivered twice or dropped.
 */
export function subscribeEvents(url: string, options: EventStreamOptions): { close: () => void } {
  const parser = new SseParser();
  parser.lastEventId = options.lastEventId ?? null;
  let closed = false;
  let attempt = 0;
  const base = options.retryBaseMs ?? 500;

  const connect = async (): Promise<void> => {
    while (!closed) {
      options.onStatus?.(attempt === 0 ? "connecting" : "retrying");
      try {
        const headers: Record<string, string> = {};
        if (parser.lastEventId !== null) headers["Last-Event-ID"] = parser.lastEventId;
        const response = await fetch(url, { headers });
        if (!response.ok || !response.body) throw new Error(`HTTP ${response.status}`);
        options.onStatus?.("open");
        attempt = 0;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        for (;;) {
          const { done, value } = await reader.read();
          if (closed) {
            await reader.cancel().catch(() => undefined);
            return;
          }
          if (done) break;
          for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
            if (frame.event === "transition") {
              options.onEvent(JSON.parse(frame.data) as TransitionEvent);
            }
          }
        }
        return; // server closed the stream cleanly (terminal session)
      } catch (err) {
        if (closed) return;
        attempt += 1;
        const delay = Math.min(base * 2 ** (attempt - 1), 30_000);
        options.onStatus?.("retrying", String(err));
        await new Promise((resolve) => setTimeout(resolve, delay));
      }
    }
  };

  void connect().finally(() => options.onStatus?.("closed"));
  return {
    close() {
      closed = true;
    },
  };
}
