/**
 * Queue state with optimistic verdicts.
 *
 * A verdict is applied to the local entry immediately, then confirmed
 * or undone by the server response:
 *
 *   2xx      -> local entry replaced by the server's (never fabricated)
 *   409      -> entry refetched, conflict toast; someone got there first
 *   other    -> snapshot rolled back, error toast
 *   validation failure -> blocked before any request is sent
 */

import { ApiClient, ApiError, OfflineError, ValidationError } from "./api.js";
import {
  verdictPayloadSchema,
  type KnowledgeEntry,
  type KnowledgeKind,
  type QueueStats,
  type ReviewState,
  type VerdictAction,
  type VerdictPayload,
} from "./types.js";

export const PAGE_SIZE = 25;

export interface QueueFilters {
  state: ReviewState | null;
  kind: KnowledgeKind | null;
  /** Client-side, applied to the current page only. */
  search: string;
}

export interface Toast {
  level: "info" | "conflict" | "error";
  message: string;
}

export interface QueueViewState {
  entries: KnowledgeEntry[];
  pageEntries: KnowledgeEntry[];
  page: number;
  pageCount: number;
  filters: QueueFilters;
  stats: QueueStats | null;
  offline: boolean;
  toast: Toast | null;
  pendingVerdicts: ReadonlySet<string>;
}

type Listener = (view: QueueViewState) => void;

const EMPTY_STATS: QueueStats = { pending: 0, approved: 0, rejected: 0, edited: 0, total: 0 };

function optimisticEntry(entry: KnowledgeEntry, payload: VerdictPayload): KnowledgeEntry {
  switch (payload.action) {
    case "Approve":
      return { ...entry, state: "Approved" };
    case "Reject":
      return { ...entry, state: "Rejected", reviewer_note: payload.note ?? null };
    case "Edit":
      return { ...entry, state: "Edited", edited_text: payload.edited_text ?? null };
  }
}

export class QueueStore {
  private entries: KnowledgeEntry[] = [];
  private stats: QueueStats | null = null;
  private filters: QueueFilters = { state: "Pending", kind: null, search: "" };
  private page = 0;
  private offline = false;
  private toast: Toast | null = null;
  private inFlight = new Set<string>();
  private listeners = new Set<Listener>();

  constructor(
    private readonly api: ApiClient,
    private readonly reviewerId: string,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    listener(this.view());
    return () => this.listeners.delete(listener);
  }

  /** Pull the full queue and stats from the server. */
  async refresh(): Promise<void> {
    try {
      const [entries, stats] = await Promise.all([
        this.api.fetchQueue(),
        this.api.fetchStats(),
      ]);
      this.entries = entries;
      this.stats = stats;
      this.offline = false;
    } catch (err) {
      if (err instanceof OfflineError) {
        this.offline = true;
      } else {
        this.toast = { level: "error", message: String(err instanceof Error ? err.message : err) };
      }
    }
    this.notify();
  }

  setStateFilter(state: ReviewState | null): void {
    this.filters = { ...this.filters, state };
    this.page = 0;
    this.notify();
  }

  setKindFilter(kind: KnowledgeKind | null): void {
    this.filters = { ...this.filters, kind };
    this.page = 0;
    this.notify();
  }

  setSearch(search: string): void {
    this.filters = { ...this.filters, search };
    this.notify();
  }

  setPage(page: number): void {
    this.page = Math.max(0, Math.min(page, this.pageCount() - 1));
    this.notify();
  }

  dismissToast(): void {
    this.toast = null;
    this.notify();
  }

  /**
   * Validate, optimistically apply, then reconcile with the server.
   * Returns the entry's settled state, or null when validation blocked
   * the submit (nothing was sent, nothing changed).
   */
  async submitVerdict(
    entryId: string,
    action: VerdictAction,
    extra: { note?: string; editedText?: string } = {},
  ): Promise<KnowledgeEntry | null> {
    const payload: VerdictPayload = {
      action,
      reviewer_id: this.reviewerId,
      ...(extra.note !== undefined ? { note: extra.note } : {}),
      ...(extra.editedText !== undefined ? { edited_text: extra.editedText } : {}),
    };
    const checked = verdictPayloadSchema.safeParse(payload);
    if (!checked.success) {
      const issue = checked.error.issues[0];
      this.toast = {
        level: "error",
        message: issue ? issue.message : "invalid verdict",
      };
      this.notify();
      return null;
    }

    const index = this.entries.findIndex((e) => e.entry_id === entryId);
    if (index < 0 || this.inFlight.has(entryId)) return null;
    const snapshot = this.entries[index]!;
    const snapshotStats = this.stats;

    this.entries = [...this.entries];
    this.entries[index] = optimisticEntry(snapshot, payload);
    this.stats = this.bumpStats(snapshot.state, this.entries[index]!.state);
    this.inFlight.add(entryId);
    this.notify();

    try {
      const settled = await this.api.submitVerdict(entryId, payload);
      this.replaceEntry(settled);
      return settled;
    } catch (err) {
      // undo the optimistic change before deciding what to show
      this.replaceEntry(snapshot);
      this.stats = snapshotStats;
      if (err instanceof ApiError && err.status === 409) {
        // lost the race: show what the server actually holds
        const server = await this.refetchQuietly(entryId);
        if (server) this.replaceEntry(server, { recount: true });
        this.toast = { level: "conflict", message: `'${snapshot.class_label}' was already finalized` };
        return server;
      }
      if (err instanceof OfflineError) {
        this.offline = true;
      } else if (err instanceof ValidationError || err instanceof ApiError) {
        this.toast = { level: "error", message: err.message };
      } else {
        this.toast = { level: "error", message: String(err) };
      }
      return null;
    } finally {
      this.inFlight.delete(entryId);
      this.notify();
    }
  }

  view(): QueueViewState {
    const filtered = this.filteredEntries();
    const pageCount = Math.max(1, Math.ceil(filtered.length / PAGE_SIZE));
    const page = Math.min(this.page, pageCount - 1);
    let pageEntries = filtered.slice(page * PAGE_SIZE, (page + 1) * PAGE_SIZE);
    const needle = this.filters.search.trim().toLowerCase();
    if (needle) {
      pageEntries = pageEntries.filter(
        (e) =>
          e.class_label.toLowerCase().includes(needle) ||
          (e.edited_text ?? e.description).toLowerCase().includes(needle),
      );
    }
    return {
      entries: filtered,
      pageEntries,
      page,
      pageCount,
      filters: { ...this.filters },
      stats: this.stats,
      offline: this.offline,
      toast: this.toast,
      pendingVerdicts: new Set(this.inFlight),
    };
  }

  private filteredEntries(): KnowledgeEntry[] {
    return this.entries.filter(
      (e) =>
        (this.filters.state === null || e.state === this.filters.state) &&
        (this.filters.kind === null || e.kind === this.filters.kind),
    );
  }

  private pageCount(): number {
    return Math.max(1, Math.ceil(this.filteredEntries().length / PAGE_SIZE));
  }

  private replaceEntry(entry: KnowledgeEntry, opts: { recount?: boolean } = {}): void {
    const index = this.entries.findIndex((e) => e.entry_id === entry.entry_id);
    const previous = index >= 0 ? this.entries[index]! : null;
    this.entries = [...this.entries];
    if (index >= 0) this.entries[index] = entry;
    else this.entries.push(entry);
    if (opts.recount && previous) {
      this.stats = this.bumpStats(previous.state, entry.state);
    }
  }

  private bumpStats(from: ReviewState, to: ReviewState): QueueStats | null {
    if (!this.stats || from === to) return this.stats;
    const next = { ...(this.stats ?? EMPTY_STATS) };
    const key = (s: ReviewState) => s.toLowerCase() as "pending" | "approved" | "rejected" | "edited";
    next[key(from)] -= 1;
    next[key(to)] += 1;
    return next;
  }

  private async refetchQuietly(entryId: string): Promise<KnowledgeEntry | null> {
    try {
      return await this.api.fetchEntry(entryId);
    } catch {
      return null;
    }
  }

  private notify(): void {
    const snapshot = this.view();
    for (const listener of this.listeners) listener(snapshot);
  }
}
