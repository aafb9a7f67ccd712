/** Queue store: optimistic verdicts, rollback, conflicts, paging, filters. */

import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { PAGE_SIZE, QueueStore } from "../src/store.js";
import type { KnowledgeEntry } from "../src/types.js";
import {
  deferred,
  flush,
  jsonResponse,
  makeEntry,
  makeStats,
  scriptedFetch,
  type FetchHandler,
  type RecordedCall,
} from "./helpers.js";

const BASE = "http://review.test:8765";

function storeWith(entries: KnowledgeEntry[], onVerdict?: FetchHandler) {
  const pending = entries.filter((e) => e.state === "Pending").length;
  const approved = entries.filter((e) => e.state === "Approved").length;
  const rejected = entries.filter((e) => e.state === "Rejected").length;
  const edited = entries.filter((e) => e.state === "Edited").length;
  const handler = (call: RecordedCall) => {
    if (call.url.endsWith("/api/queue")) return jsonResponse(entries);
    if (call.url.endsWith("/api/stats")) {
      return jsonResponse(makeStats({ pending, approved, rejected, edited }));
    }
    if (call.url.includes("/verdict") && onVerdict) return onVerdict(call);
    throw new Error(`unexpected request ${call.method} ${call.url}`);
  };
  const { fetchFn, calls } = scriptedFetch(handler);
  const store = new QueueStore(new ApiClient({ baseUrl: BASE, fetchFn }), "reviewer-1");
  return { store, calls };
}

describe("refresh", () => {
  it("loads entries and stats from the server", async () => {
    const entries = [makeEntry(), makeEntry()];
    const { store } = storeWith(entries);
    await store.refresh();
    const view = store.view();
    expect(view.entries).toHaveLength(2);
    expect(view.stats?.pending).toBe(2);
    expect(view.offline).toBe(false);
  });

  it("raises the offline flag when the server is unreachable", async () => {
    const { fetchFn } = scriptedFetch(() => {
      throw new TypeError("fetch failed");
    });
    const store = new QueueStore(new ApiClient({ baseUrl: BASE, fetchFn }), "reviewer-1");
    await store.refresh();
    expect(store.view().offline).toBe(true);
  });

  it("keeps prior entries when the server sends an unrecognized shape", async () => {
    const good = [makeEntry()];
    let respondGood = true;
    const { fetchFn } = scriptedFetch((call) => {
      if (call.url.endsWith("/api/queue")) {
        return respondGood ? jsonResponse(good) : jsonResponse([{ state: "Bogus" }]);
      }
      return jsonResponse(makeStats({ pending: 1 }));
    });
    const store = new QueueStore(new ApiClient({ baseUrl: BASE, fetchFn }), "reviewer-1");
    await store.refresh();
    respondGood = false;
    await store.refresh();
    const view = store.view();
    expect(view.entries).toHaveLength(1);
    expect(view.entries[0]?.entry_id).toBe(good[0]?.entry_id);
    expect(view.toast?.level).toBe("error");
  });
});

describe("optimistic verdicts", () => {
  it("applies an approval immediately and then adopts the server copy", async () => {
    const entry = makeEntry();
    const gate = deferred<Response>();
    const { store } = storeWith([entry], () => gate.promise);
    await store.refresh();
    store.setStateFilter(null);

    const submit = store.submitVerdict(entry.entry_id, "Approve");
    const during = store.view();
    expect(during.entries[0]?.state).toBe("Approved");
    expect(during.stats).toMatchObject({ pending: 0, approved: 1 });
    expect(during.pendingVerdicts.has(entry.entry_id)).toBe(true);

    const serverCopy = {
      ...entry,
      state: "Approved" as const,
      history: [{ action: "Approve", reviewer_id: "reviewer-1", timestamp: "t" }],
    };
    gate.resolve(jsonResponse(serverCopy));
    const settled = await submit;
    expect(settled?.history).toHaveLength(1);
    const after = store.view();
    expect(after.entries[0]?.history).toHaveLength(1);
    expect(after.pendingVerdicts.size).toBe(0);
  });

  it("rolls back entry and stats when the server fails", async () => {
    const entry = makeEntry();
    const { store } = storeWith([entry], () =>
      jsonResponse({ error: "disk full", code: "internal" }, 500),
    );
    await store.refresh();
    const settled = await store.submitVerdict(entry.entry_id, "Approve");
    expect(settled).toBeNull();
    const view = store.view();
    expect(view.entries[0]?.state).toBe("Pending");
    expect(view.stats).toMatchObject({ pending: 1, approved: 0 });
    expect(view.toast).toMatchObject({ level: "error", message: "disk full" });
  });

  it("adopts the server's entry after a conflict instead of guessing", async () => {
    const entry = makeEntry();
    const serverCopy = {
      ...entry,
      state: "Rejected" as const,
      reviewer_note: "someone else got here first",
    };
    const handler = (call: RecordedCall) => {
      if (call.url.endsWith("/api/queue")) return jsonResponse([entry]);
      if (call.url.endsWith("/api/stats")) return jsonResponse(makeStats({ pending: 1 }));
      if (call.method === "POST") {
        return jsonResponse({ error: "entry already finalized", code: "conflict" }, 409);
      }
      return jsonResponse(serverCopy);
    };
    const { fetchFn } = scriptedFetch(handler);
    const store = new QueueStore(new ApiClient({ baseUrl: BASE, fetchFn }), "reviewer-1");
    await store.refresh();
    store.setStateFilter(null);

    const settled = await store.submitVerdict(entry.entry_id, "Approve");
    expect(settled?.state).toBe("Rejected");
    const view = store.view();
    expect(view.entries[0]?.state).toBe("Rejected");
    expect(view.entries[0]?.reviewer_note).toBe("someone else got here first");
    expect(view.stats).toMatchObject({ pending: 0, rejected: 1, approved: 0 });
    expect(view.toast?.level).toBe("conflict");
  });

  it("marks the store offline when a verdict cannot reach the server", async () => {
    const entry = makeEntry();
    const { store } = storeWith([entry], () => {
      throw new TypeError("fetch failed");
    });
    await store.refresh();
    const settled = await store.submitVerdict(entry.entry_id, "Approve");
    expect(settled).toBeNull();
    const view = store.view();
    expect(view.offline).toBe(true);
    expect(view.entries[0]?.state).toBe("Pending");
  });

  it("ignores a second verdict while the first is in flight", async () => {
    const entry = makeEntry();
    const gate = deferred<Response>();
    const { store, calls } = storeWith([entry], () => gate.promise);
    await store.refresh();

    const first = store.submitVerdict(entry.entry_id, "Approve");
    const second = await store.submitVerdict(entry.entry_id, "Approve");
    expect(second).toBeNull();
    gate.resolve(jsonResponse({ ...entry, state: "Approved" as const }));
    await first;
    const posts = calls.filter((c) => c.method === "POST");
    expect(posts).toHaveLength(1);
  });
});

describe("client-side validation", () => {
  it("blocks a rejection without a note before any request is sent", async () => {
    const entry = makeEntry();
    const { store, calls } = storeWith([entry]);
    await store.refresh();
    const callsBefore = calls.length;

    const settled = await store.submitVerdict(entry.entry_id, "Reject", { note: "   " });
    expect(settled).toBeNull();
    expect(calls.length).toBe(callsBefore);
    const view = store.view();
    expect(view.entries[0]?.state).toBe("Pending");
    expect(view.toast).toMatchObject({
      level: "error",
      message: "Reject requires a non-empty note",
    });
  });

  it("blocks an edit without replacement text", async () => {
    const entry = makeEntry();
    const { store, calls } = storeWith([entry]);
    await store.refresh();
    const callsBefore = calls.length;

    const settled = await store.submitVerdict(entry.entry_id, "Edit", { editedText: "" });
    expect(settled).toBeNull();
    expect(calls.length).toBe(callsBefore);
    expect(store.view().toast?.message).toBe("Edit requires non-empty edited_text");
  });

  it("sends a rejection once the note is provided", async () => {
    const entry = makeEntry();
    const { store, calls } = storeWith([entry], (call) =>
      jsonResponse({
        ...entry,
        state: "Rejected" as const,
        reviewer_note: (call.body as { note: string }).note,
      }),
    );
    await store.refresh();
    const settled = await store.submitVerdict(entry.entry_id, "Reject", { note: "wrong host" });
    expect(settled?.reviewer_note).toBe("wrong host");
    const post = calls.find((c) => c.method === "POST");
    expect(post?.body).toMatchObject({ action: "Reject", note: "wrong host", reviewer_id: "reviewer-1" });
  });
});

describe("paging and filters", () => {
  it("shows 25 entries per page", async () => {
    const entries = Array.from({ length: 60 }, () => makeEntry());
    const { store } = storeWith(entries);
    await store.refresh();
    let view = store.view();
    expect(view.pageEntries).toHaveLength(PAGE_SIZE);
    expect(view.pageCount).toBe(3);

    store.setPage(2);
    view = store.view();
    expect(view.pageEntries).toHaveLength(10);
    expect(view.page).toBe(2);
  });

  it("clamps page numbers to the valid range", async () => {
    const entries = Array.from({ length: 30 }, () => makeEntry());
    const { store } = storeWith(entries);
    await store.refresh();
    store.setPage(99);
    expect(store.view().page).toBe(1);
    store.setPage(-5);
    expect(store.view().page).toBe(0);
  });

  it("filters by state and kind and resets the page", async () => {
    const entries = [
      ...Array.from({ length: 30 }, () => makeEntry()),
      makeEntry({ state: "Approved" }),
      makeEntry({ state: "Approved", kind: "Disease" }),
    ];
    const { store } = storeWith(entries);
    await store.refresh();
    store.setPage(1);

    store.setStateFilter("Approved");
    let view = store.view();
    expect(view.page).toBe(0);
    expect(view.entries).toHaveLength(2);

    store.setKindFilter("Disease");
    view = store.view();
    expect(view.entries).toHaveLength(1);
    expect(view.entries[0]?.kind).toBe("Disease");

    store.setStateFilter(null);
    store.setKindFilter(null);
    expect(store.view().entries).toHaveLength(32);
  });

  it("searches only within the current page", async () => {
    const entries = Array.from({ length: 30 }, () => makeEntry());
    entries.push(makeEntry({ class_label: "zebra grass" }));
    const { store } = storeWith(entries);
    await store.refresh();

    store.setSearch("zebra");
    expect(store.view().pageEntries).toHaveLength(0);

    store.setPage(1);
    const view = store.view();
    expect(view.pageEntries).toHaveLength(1);
    expect(view.pageEntries[0]?.class_label).toBe("zebra grass");
    expect(view.entries).toHaveLength(31);
  });

  it("matches on the displayed text, including reviewer edits", async () => {
    const entries = [
      makeEntry({ description: "original words" }),
      makeEntry({ state: "Edited", edited_text: "freshly corrected" }),
    ];
    const { store } = storeWith(entries);
    await store.refresh();
    store.setStateFilter(null);
    store.setSearch("corrected");
    const view = store.view();
    expect(view.pageEntries).toHaveLength(1);
    expect(view.pageEntries[0]?.state).toBe("Edited");
  });
});

describe("subscriptions", () => {
  it("notifies subscribers on every state change", async () => {
    const entry = makeEntry();
    const { store } = storeWith([entry], () =>
      jsonResponse({ ...entry, state: "Approved" as const }),
    );
    const seen: string[] = [];
    store.setStateFilter(null);
    store.subscribe((view) => {
      seen.push(view.entries[0]?.state ?? "empty");
    });
    await store.refresh();
    await store.submitVerdict(entry.entry_id, "Approve");
    await flush();
    expect(seen[0]).toBe("empty");
    expect(seen).toContain("Pending");
    expect(seen.at(-1)).toBe("Approved");
  });

  it("stops notifying after unsubscribe", async () => {
    const { store } = storeWith([makeEntry()]);
    let count = 0;
    const unsubscribe = store.subscribe(() => {
      count += 1;
    });
    unsubscribe();
    await store.refresh();
    expect(count).toBe(1);
  });
});
