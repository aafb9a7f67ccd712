/**
 * DOM rendering for the review queue.
 *
 * One render function redraws the whole view from a QueueViewState
 * snapshot; no incremental DOM state is kept outside the store except
 * the current card selection and any open note/edit form.
 */

import { PAGE_SIZE, QueueStore, type QueueViewState } from "./store.js";
import {
  KNOWLEDGE_KINDS,
  REVIEW_STATES,
  displayText,
  type KnowledgeEntry,
} from "./types.js";

interface FormState {
  entryId: string;
  mode: "reject" | "edit";
  draft: string;
}

export class QueueView {
  private selected: string | null = null;
  private form: FormState | null = null;
  private lastView: QueueViewState | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly store: QueueStore,
  ) {
    this.root.addEventListener("keydown", (ev) => this.onKeydown(ev as KeyboardEvent));
    this.store.subscribe((view) => this.render(view));
  }

  render(view: QueueViewState): void {
    this.lastView = view;
    if (this.selected && !view.pageEntries.some((e) => e.entry_id === this.selected)) {
      this.selected = view.pageEntries[0]?.entry_id ?? null;
    }
    if (!this.selected) this.selected = view.pageEntries[0]?.entry_id ?? null;

    this.root.textContent = "";
    if (view.offline) this.root.append(this.offlineBanner());
    if (view.toast) this.root.append(this.toastBar(view.toast.level, view.toast.message));
    this.root.append(this.statsBar(view));
    this.root.append(this.filterBar(view));
    const list = el("div", "queue");
    for (const entry of view.pageEntries) {
      list.append(this.card(entry, view));
    }
    if (view.pageEntries.length === 0) {
      list.append(el("p", "empty", "no entries match the current filters"));
    }
    this.root.append(list);
    this.root.append(this.pager(view));
  }

  private offlineBanner(): HTMLElement {
    const banner = el("div", "banner offline", "review service unreachable; retrying may help");
    banner.setAttribute("role", "alert");
    return banner;
  }

  private toastBar(level: string, message: string): HTMLElement {
    const bar = el("div", `toast ${level}`, message);
    const close = el("button", "toast-close", "dismiss");
    close.addEventListener("click", () => this.store.dismissToast());
    bar.append(close);
    return bar;
  }

  private statsBar(view: QueueViewState): HTMLElement {
    const bar = el("div", "stats");
    const stats = view.stats;
    const parts: [string, number][] = stats
      ? [
          ["pending", stats.pending],
          ["approved", stats.approved],
          ["rejected", stats.rejected],
          ["edited", stats.edited],
          ["total", stats.total],
        ]
      : [];
    for (const [label, count] of parts) {
      const chip = el("span", `stat stat-${label}`);
      chip.append(el("span", "stat-label", label), el("span", "stat-count", String(count)));
      bar.append(chip);
    }
    return bar;
  }

  private filterBar(view: QueueViewState): HTMLElement {
    const bar = el("div", "filters");

    const stateSelect = document.createElement("select");
    stateSelect.className = "filter-state";
    stateSelect.append(option("all states", ""));
    for (const state of REVIEW_STATES) stateSelect.append(option(state, state));
    stateSelect.value = view.filters.state ?? "";
    stateSelect.addEventListener("change", () => {
      const value = stateSelect.value;
      this.store.setStateFilter(value === "" ? null : (value as (typeof REVIEW_STATES)[number]));
    });

    const kindSelect = document.createElement("select");
    kindSelect.className = "filter-kind";
    kindSelect.append(option("all kinds", ""));
    for (const kind of KNOWLEDGE_KINDS) kindSelect.append(option(kind, kind));
    kindSelect.value = view.filters.kind ?? "";
    kindSelect.addEventListener("change", () => {
      const value = kindSelect.value;
      this.store.setKindFilter(value === "" ? null : (value as (typeof KNOWLEDGE_KINDS)[number]));
    });

    const search = document.createElement("input");
    search.type = "search";
    search.className = "filter-search";
    search.placeholder = "search this page";
    search.value = view.filters.search;
    search.addEventListener("input", () => this.store.setSearch(search.value));

    bar.append(stateSelect, kindSelect, search);
    return bar;
  }

  private card(entry: KnowledgeEntry, view: QueueViewState): HTMLElement {
    const card = el("article", `card state-${entry.state.toLowerCase()}`);
    card.dataset["entryId"] = entry.entry_id;
    if (entry.entry_id === this.selected) card.classList.add("selected");
    if (view.pendingVerdicts.has(entry.entry_id)) card.classList.add("inflight");
    card.tabIndex = 0;
    card.addEventListener("focus", () => this.select(entry.entry_id));
    card.addEventListener("click", () => this.select(entry.entry_id));

    const head = el("header", "card-head");
    head.append(el("h3", "class-label", entry.class_label));
    head.append(el("span", "kind", entry.kind));
    head.append(el("span", `badge badge-${entry.state.toLowerCase()}`, entry.state));
    if (entry.retrieval_round > 0) {
      head.append(el("span", "retry", `retry ${entry.retrieval_round}`));
    }
    card.append(head);

    card.append(el("p", "description", displayText(entry)));
    if (entry.edited_text !== null) {
      card.append(el("p", "edited-note", "shown text was edited by a reviewer"));
    }
    if (entry.reviewer_note) {
      card.append(el("p", "reviewer-note", `note: ${entry.reviewer_note}`));
    }
    if (entry.source_citations.length > 0) {
      const cites = el("ul", "citations");
      for (const cite of entry.source_citations) cites.append(el("li", "citation", cite));
      card.append(cites);
    }

    if (this.form && this.form.entryId === entry.entry_id) {
      card.append(this.noteForm(entry, this.form));
    } else if (entry.state === "Pending") {
      card.append(this.actionRow(entry));
    }
    return card;
  }

  private actionRow(entry: KnowledgeEntry): HTMLElement {
    const row = el("div", "actions");
    const approve = el("button", "approve", "Approve (a)");
    approve.addEventListener("click", () => void this.store.submitVerdict(entry.entry_id, "Approve"));
    const reject = el("button", "reject", "Reject (r)");
    reject.addEventListener("click", () => this.openForm(entry, "reject"));
    const edit = el("button", "edit", "Edit (e)");
    edit.addEventListener("click", () => this.openForm(entry, "edit"));
    row.append(approve, reject, edit);
    return row;
  }

  private noteForm(entry: KnowledgeEntry, form: FormState): HTMLElement {
    const wrap = el("form", `verdict-form ${form.mode}-form`);
    wrap.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitForm(entry);
    });
    const field = document.createElement("textarea");
    field.className = form.mode === "reject" ? "note-input" : "edit-input";
    field.value = form.draft;
    field.placeholder = form.mode === "reject" ? "why is this entry wrong?" : "corrected description";
    field.addEventListener("input", () => {
      if (this.form) this.form.draft = field.value;
    });
    const submit = el("button", "submit", form.mode === "reject" ? "Reject" : "Save edit");
    submit.setAttribute("type", "submit");
    const cancel = el("button", "cancel", "Cancel");
    cancel.setAttribute("type", "button");
    cancel.addEventListener("click", () => {
      this.form = null;
      this.rerender();
    });
    wrap.append(field, submit, cancel);
    return wrap;
  }

  private openForm(entry: KnowledgeEntry, mode: "reject" | "edit"): void {
    this.select(entry.entry_id);
    this.form = {
      entryId: entry.entry_id,
      mode,
      draft: mode === "edit" ? displayText(entry) : "",
    };
    this.rerender();
    const field = this.root.querySelector<HTMLTextAreaElement>(
      mode === "reject" ? ".note-input" : ".edit-input",
    );
    field?.focus();
  }

  private async submitForm(entry: KnowledgeEntry): Promise<void> {
    if (!this.form) return;
    const { mode, draft } = this.form;
    const settled =
      mode === "reject"
        ? await this.store.submitVerdict(entry.entry_id, "Reject", { note: draft })
        : await this.store.submitVerdict(entry.entry_id, "Edit", { editedText: draft });
    // validation failure keeps the form open so the reviewer can fix it
    if (settled !== null) {
      this.form = null;
      this.rerender();
    }
  }

  private onKeydown(ev: KeyboardEvent): void {
    const target = ev.target as HTMLElement | null;
    if (target && (target.tagName === "TEXTAREA" || target.tagName === "INPUT" || target.tagName === "SELECT")) {
      return;
    }
    const entry = this.selectedEntry();
    if (!entry) return;
    const actionable = entry.state === "Pending";
    if (ev.key === "a" && actionable) {
      ev.preventDefault();
      void this.store.submitVerdict(entry.entry_id, "Approve");
    } else if (ev.key === "r" && actionable) {
      ev.preventDefault();
      this.openForm(entry, "reject");
    } else if (ev.key === "e" && actionable) {
      ev.preventDefault();
      this.openForm(entry, "edit");
    } else if (ev.key === "j" || ev.key === "ArrowDown") {
      ev.preventDefault();
      this.moveSelection(1);
    } else if (ev.key === "k" || ev.key === "ArrowUp") {
      ev.preventDefault();
      this.moveSelection(-1);
    }
  }

  private moveSelection(delta: number): void {
    const view = this.lastView;
    if (!view || view.pageEntries.length === 0) return;
    const ids = view.pageEntries.map((e) => e.entry_id);
    const current = this.selected ? ids.indexOf(this.selected) : -1;
    const next = Math.max(0, Math.min(ids.length - 1, current + delta));
    this.select(ids[next]!);
  }

  private select(entryId: string): void {
    if (this.selected === entryId) return;
    this.selected = entryId;
    this.rerender();
  }

  private selectedEntry(): KnowledgeEntry | null {
    const view = this.lastView;
    if (!view || !this.selected) return null;
    return view.pageEntries.find((e) => e.entry_id === this.selected) ?? null;
  }

  private pager(view: QueueViewState): HTMLElement {
    const pager = el("nav", "pager");
    const prev = el("button", "prev", "previous");
    prev.disabled = view.page === 0;
    prev.addEventListener("click", () => this.store.setPage(view.page - 1));
    const next = el("button", "next", "next");
    next.disabled = view.page >= view.pageCount - 1;
    next.addEventListener("click", () => this.store.setPage(view.page + 1));
    const label = el(
      "span",
      "page-label",
      `page ${view.page + 1} of ${view.pageCount} (${PAGE_SIZE} per page)`,
    );
    pager.append(prev, label, next);
    return pager;
  }

  private rerender(): void {
    if (this.lastView) this.render(this.lastView);
  }
}

function option(label: string, value: string): HTMLOptionElement {
  const node = document.createElement("option");
  node.textContent = label;
  node.value = value;
  return node;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}
