/** Shared fixtures: entry factories and scripted fetch implementations. */

import type { KnowledgeEntry, QueueStats } from "../src/types.js";

let counter = 0;

export function makeEntry(overrides: Partial<KnowledgeEntry> = {}): KnowledgeEntry {
  counter += 1;
  return {
    entry_id: `entry-${counter}`,
    class_label: `crop ${counter}`,
    kind: "Species",
    description: `A description of crop ${counter}, its leaves and habit.`,
    source_citations: ["Field Guide to Crops, 3rd ed."],
    state: "Pending",
    reviewer_note: null,
    edited_text: null,
    history: [],
    retrieval_round: 0,
    ...overrides,
  };
}

export function makeStats(overrides: Partial<QueueStats> = {}): QueueStats {
  const stats = { pending: 0, approved: 0, rejected: 0, edited: 0, ...overrides };
  return { ...stats, total: stats.pending + stats.approved + stats.rejected + stats.edited };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export interface RecordedCall {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

export type FetchHandler = (call: RecordedCall) => Response | Promise<Response>;

/** A fetch stub that records every call and delegates to a handler. */
export function scriptedFetch(handler: FetchHandler): {
  fetchFn: typeof fetch;
  calls: RecordedCall[];
} {
  const calls: RecordedCall[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const call: RecordedCall = {
      url: String(input),
      method: init?.method ?? "GET",
      headers: (init?.headers as Record<string, string>) ?? {},
      body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
    };
    calls.push(call);
    return handler(call);
  }) as typeof fetch;
  return { fetchFn, calls };
}

export function deferred<T>(): {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (reason?: unknown) => void;
} {
  let resolve!: (value: T) => void;
  let reject!: (reason?: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

/** Settle pending microtasks so optimistic flows can finish. */
export async function flush(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
}
