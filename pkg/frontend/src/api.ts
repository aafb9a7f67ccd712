/**
 * Thin typed client over the review-core HTTP API.
 *
 * Every response is schema-validated before it reaches the store, and
 * every verdict payload is schema-validated before it leaves the
 * client. Transport failures surface as OfflineError so the view can
 * show its offline banner; HTTP failures carry the server's error code.
 */

import {
  apiErrorBodySchema,
  knowledgeEntrySchema,
  queueSchema,
  statsSchema,
  verdictPayloadSchema,
  type KnowledgeEntry,
  type QueueStats,
  type ReviewState,
  type VerdictPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`review API unreachable: ${String(cause)}`);
    this.name = "OfflineError";
  }
}

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

export interface ApiClientOptions {
  /** e.g. http://127.0.0.1:8765; no trailing slash required. */
  baseUrl: string;
  /** Bearer token; omitted when the server runs without auth. */
  token?: string;
  /** Injectable for tests; defaults to globalThis.fetch. */
  fetchFn?: typeof fetch;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchFn: typeof fetch;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token;
    this.fetchFn = options.fetchFn ?? globalThis.fetch.bind(globalThis);
  }

  async fetchQueue(state?: ReviewState): Promise<KnowledgeEntry[]> {
    const suffix = state ? `?state=${encodeURIComponent(state.toLowerCase())}` : "";
    const body = await this.request("GET", `/api/queue${suffix}`);
    return queueSchema.parse(body);
  }

  async fetchEntry(entryId: string): Promise<KnowledgeEntry> {
    const body = await this.request("GET", `/api/entries/${encodeURIComponent(entryId)}`);
    return knowledgeEntrySchema.parse(body);
  }

  async submitVerdict(entryId: string, payload: VerdictPayload): Promise<KnowledgeEntry> {
    const checked = verdictPayloadSchema.safeParse(payload);
    if (!checked.success) {
      const issue = checked.error.issues[0];
      throw new ValidationError(issue ? issue.message : "invalid verdict payload");
    }
    const body = await this.request(
      "POST",
      `/api/entries/${encodeURIComponent(entryId)}/verdict`,
      checked.data,
    );
    return knowledgeEntrySchema.parse(body);
  }

  async fetchStats(): Promise<QueueStats> {
    const body = await this.request("GET", "/api/stats");
    return statsSchema.parse(body);
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const headers: Record<string, string> = { Accept: "application/json" };
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;

    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new OfflineError(cause);
    }

    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status} ${response.statusText}`;
      try {
        const parsed = apiErrorBodySchema.safeParse(await response.json());
        if (parsed.success) {
          code = parsed.data.code;
          message = parsed.data.error;
        }
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, code, message);
    }
    return response.json();
  }
}
