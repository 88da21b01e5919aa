/** HTTP client for the session service.
 *
 * Talks only to the documented endpoints: POST /v1/ask, GET
 * /v1/sessions/{id}/events, GET /v1/sessions/{id}/trace, DELETE
 * /v1/sessions/{id}.  The event subscription resumes from the last seen
 * sequence number after a dropped connection.
 */

import { SseParser } from "./sse.js";
import type { AgentEvent } from "./types.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export interface StreamHandlers {
  onEvent: (event: AgentEvent) => void;
  /** Stream finished because the session closed its log. */
  onEnd?: () => void;
  /** Connection dropped; a resume attempt follows unless aborted. */
  onReconnect?: (attempt: number) => void;
  onError?: (error: unknown) => void;
}

export interface SubscribeOptions {
  afterSeq?: number;
  maxRetries?: number;
  retryDelayMs?: number;
  signal?: AbortSignal;
}

async function readJson(response: Response): Promise<Record<string, unknown>> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* non-JSON error body; keep the status text */
    }
    throw new ServiceError(detail, response.status);
  }
  return (await response.json()) as Record<string, unknown>;
}

export class ServiceClient {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<boolean> {
    try {
      const response = await fetch(this.url("/healthz"));
      return response.ok;
    } catch {
      return false;
    }
  }

  /** Start a session; with followUpOf set, the service threads the prior
   * session's answer into the new question. */
  async ask(question: string, followUpOf?: string): Promise<string> {
    const body: Record<string, unknown> = { question };
    if (followUpOf) body.follow_up_of = followUpOf;
    const response = await fetch(this.url("/v1/ask"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const data = await readJson(response);
    return String(data.session_id);
  }

  async trace(sessionId: string): Promise<Record<string, unknown>> {
    const response = await fetch(this.url(`/v1/sessions/${sessionId}/trace`));
    return readJson(response);
  }

  async purge(sessionId: string): Promise<void> {
    const response = await fetch(this.url(`/v1/sessions/${sessionId}`), {
      method: "DELETE",
    });
    await readJson(response);
  }

  /** Subscribe to a session's event stream until the log closes.
   *
   * On connection loss the subscription reconnects with a Last-Event-Seq
   * header so already-seen events are not re-sent; the fold tolerates
   * overlap anyway.  Resolves once the stream ends cleanly.
   */
  async subscribe(sessionId: string, handlers: StreamHandlers, options: SubscribeOptions = {}): Promise<void> {
    let lastSeq = options.afterSeq ?? 0;
    const maxRetries = options.maxRetries ?? 5;
    const retryDelayMs = options.retryDelayMs ?? 250;
    let attempt = 0;
    for (;;) {
      try {
        const response = await fetch(this.url(`/v1/sessions/${sessionId}/events`), {
          headers: { "last-event-seq": String(lastSeq) },
          signal: options.signal,
        });
        if (!response.ok || response.body === null) {
          throw new ServiceError(response.statusText, response.status);
        }
        attempt = 0;
        const parser = new SseParser();
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
            const event = JSON.parse(frame.data) as AgentEvent;
            lastSeq = Math.max(lastSeq, event.seq);
            handlers.onEvent(event);
          }
        }
        handlers.onEnd?.();
        return;
      } catch (error) {
        if (options.signal?.aborted) return;
        if (error instanceof ServiceError && error.status >= 400 && error.status < 500) {
          handlers.onError?.(error);
          throw error;
        }
        attempt += 1;
        if (attempt > maxRetries) {
          handlers.onError?.(error);
          throw error;
        }
        handlers.onReconnect?.(attempt);
        await new Promise((resolve) => setTimeout(resolve, retryDelayMs));
      }
    }
  }
}
