"""Human review gate over retrieved knowledge entries.

Stage III may only consume entries a reviewer approved or edited. The
queue is a persisted map keyed by class label with an append-only
verdict log, so the whole review session can be audited or replayed
onto a fresh queue with identical results.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .jsonio import canonical_json, read_jsonl, sha256_hex

ENTRIES_FILE = "entries.jsonl"
VERDICTS_FILE = "verdicts.jsonl"


class ReviewState(str, Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    REJECTED = "Rejected"
    EDITED = "Edited"


FINAL_STATES = (ReviewState.APPROVED, ReviewState.EDITED)


class KnowledgeKind(str, Enum):
    SPECIES = "Species"
    DISEASE = "Disease"


class VerdictAction(str, Enum):
    APPROVE = "Approve"
    REJECT = "Reject"
    EDIT = "Edit"


class NotFoundError(KeyError):
    pass


class StateError(ValueError):
    """Transition not allowed from the entry's current state."""


class InvalidVerdictError(ValueError):
    pass


class PersistenceError(OSError):
    pass


def entry_id_for(class_label: str) -> str:
    return sha256_hex(class_label.strip().casefold())[:16]


@dataclass(frozen=True)
class KnowledgeEntry:
    class_label: str
    kind: KnowledgeKind
    description: str
    source_citations: tuple[str, ...] = ()
    state: ReviewState = ReviewState.PENDING
    reviewer_note: str | None = None
    edited_text: str | None = None
    history: tuple[dict, ...] = ()
    retrieval_round: int = 0

    @property
    def entry_id(self) -> str:
        return entry_id_for(self.class_label)

    @property
    def exported_text(self) -> str:
        if self.state is ReviewState.EDITED:
            assert self.edited_text is not None
            return self.edited_text
        return self.description

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "class_label": self.class_label,
            "kind": self.kind.value,
            "description": self.description,
            "source_citations": list(self.source_citations),
            "state": self.state.value,
            "reviewer_note": self.reviewer_note,
            "edited_text": self.edited_text,
            "history": list(self.history),
            "retrieval_round": self.retrieval_round,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "KnowledgeEntry":
        return cls(
            class_label=obj["class_label"],
            kind=KnowledgeKind(obj["kind"]),
            description=obj["description"],
            source_citations=tuple(obj.get("source_citations", ())),
            state=ReviewState(obj.get("state", "Pending")),
            reviewer_note=obj.get("reviewer_note"),
            edited_text=obj.get("edited_text"),
            history=tuple(obj.get("history", ())),
            retrieval_round=int(obj.get("retrieval_round", 0)),
        )


@dataclass(frozen=True)
class Verdict:
    entry_id: str
    action: VerdictAction
    reviewer_id: str
    timestamp: str
    edited_text: str | None = None
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "action": self.action.value,
            "reviewer_id": self.reviewer_id,
            "timestamp": self.timestamp,
            "edited_text": self.edited_text,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Verdict":
        return cls(
            entry_id=obj["entry_id"],
            action=VerdictAction(obj["action"]),
            reviewer_id=obj["reviewer_id"],
            timestamp=obj["timestamp"],
            edited_text=obj.get("edited_text"),
            note=obj.get("note"),
        )


class ReviewQueue:
    """FIFO-ordered entry store with an append-only verdict log.

    All mutations happen under one lock; concurrent API handlers are
    serialized here, reads work on snapshots.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._entries: dict[str, KnowledgeEntry] = {}
        self._order: list[str] = []
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise PersistenceError(f"cannot create review dir {self.root}: {exc}") from exc
        self._load()

    # -- persistence -------------------------------------------------

    def _load(self) -> None:
        path = self.root / ENTRIES_FILE
        if not path.exists():
            return
        for obj in read_jsonl(path):
            entry = KnowledgeEntry.from_dict(obj)
            self._entries[entry.entry_id] = entry
            self._order.append(entry.entry_id)

    def _persist_entries(self) -> None:
        path = self.root / ENTRIES_FILE
        tmp = path.with_suffix(".tmp")
        try:
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                for entry_id in self._order:
                    fh.write(canonical_json(self._entries[entry_id].to_dict()))
                    fh.write("\n")
            os.replace(tmp, path)
        except OSError as exc:
            raise PersistenceError(f"cannot persist queue at {path}: {exc}") from exc

    def _append_verdict(self, verdict: Verdict) -> None:
        path = self.root / VERDICTS_FILE
        try:
            with open(path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(canonical_json(verdict.to_dict()))
                fh.write("\n")
        except OSError as exc:
            raise PersistenceError(f"cannot append verdict at {path}: {exc}") from exc

    # -- queries -----------------------------------------------------

    def __len__(self) -> int:
        return len(self._order)

    def get(self, entry_id: str) -> KnowledgeEntry:
        try:
            return self._entries[entry_id]
        except KeyError:
            raise NotFoundError(entry_id) from None

    def entries(self, state: ReviewState | None = None) -> list[KnowledgeEntry]:
        out = [self._entries[eid] for eid in self._order]
        if state is not None:
            out = [e for e in out if e.state is state]
        return out

    def stats(self) -> dict[str, int]:
        counts = {state.value.lower(): 0 for state in ReviewState}
        for entry in self._entries.values():
            counts[entry.state.value.lower()] += 1
        counts["total"] = len(self._entries)
        return counts

    def reretrieval_flags(self) -> dict[str, str]:
        """class_label -> reviewer note, for every rejected entry."""
        return {
            e.class_label: e.reviewer_note or ""
            for e in self._entries.values()
            if e.state is ReviewState.REJECTED
        }

    # -- mutations ---------------------------------------------------

    def enqueue(self, entries: Iterable[KnowledgeEntry]) -> int:
        """Add Pending entries; same class label upserts in place.

        The incoming entry must be Pending. Upserting over a finalized
        (Approved/Edited) entry would silently discard review work, so
        that is a StateError; upserting over Rejected reopens the class
        with its retrieval round bumped.
        """
        with self._lock:
            for entry in entries:
                if entry.state is not ReviewState.PENDING:
                    raise StateError(f"can only enqueue Pending entries, got {entry.state.value}")
                existing = self._entries.get(entry.entry_id)
                if existing is None:
                    self._entries[entry.entry_id] = entry
                    self._order.append(entry.entry_id)
                    continue
                if existing.state in FINAL_STATES:
                    raise StateError(
                        f"entry {entry.class_label!r} already finalized ({existing.state.value})"
                    )
                bump = 1 if existing.state is ReviewState.REJECTED else 0
                self._entries[entry.entry_id] = replace(
                    entry,
                    history=existing.history,
                    retrieval_round=existing.retrieval_round + bump,
                )
            self._persist_entries()
            return len(self._order)

    def apply_verdict(self, verdict: Verdict) -> KnowledgeEntry:
        with self._lock:
            updated = self._apply_locked(verdict)
            self._persist_entries()
            return updated

    def _apply_locked(self, verdict: Verdict) -> KnowledgeEntry:
        entry = self._entries.get(verdict.entry_id)
        if entry is None:
            raise NotFoundError(verdict.entry_id)
        if entry.state is not ReviewState.PENDING:
            raise StateError(f"entry {entry.class_label!r} already {entry.state.value}")

        if verdict.action is VerdictAction.APPROVE:
            updated = replace(entry, state=ReviewState.APPROVED)
        elif verdict.action is VerdictAction.REJECT:
            if not (verdict.note and verdict.note.strip()):
                raise InvalidVerdictError("Reject requires a non-empty note")
            updated = replace(entry, state=ReviewState.REJECTED, reviewer_note=verdict.note)
        elif verdict.action is VerdictAction.EDIT:
            if not (verdict.edited_text and verdict.edited_text.strip()):
                raise InvalidVerdictError("Edit requires non-empty edited_text")
            updated = replace(entry, state=ReviewState.EDITED, edited_text=verdict.edited_text)
        else:  # pragma: no cover - enum is closed
            raise InvalidVerdictError(f"unknown action {verdict.action}")

        event = {
            "action": verdict.action.value,
            "reviewer_id": verdict.reviewer_id,
            "timestamp": verdict.timestamp,
        }
        if verdict.note:
            event["note"] = verdict.note
        updated = replace(updated, history=entry.history + (event,))
        self._entries[verdict.entry_id] = updated
        self._append_verdict(verdict)
        return updated

    def approve_all_pending(self, reviewer_id: str, timestamp: str) -> int:
        # one entries rewrite for the whole batch; per-verdict persistence
        # would rewrite the file once per class
        with self._lock:
            pending = [e for e in self.entries(ReviewState.PENDING)]
            for entry in pending:
                self._apply_locked(
                    Verdict(
                        entry_id=entry.entry_id,
                        action=VerdictAction.APPROVE,
                        reviewer_id=reviewer_id,
                        timestamp=timestamp,
                    )
                )
            if pending:
                self._persist_entries()
            return len(pending)

    # -- exports -----------------------------------------------------

    def export_approved(self) -> list[KnowledgeEntry]:
        """Approved and Edited entries in class_label order."""
        out = [e for e in self._entries.values() if e.state in FINAL_STATES]
        return sorted(out, key=lambda e: e.class_label)


def replay_verdicts(root: Path | str, verdicts: Iterable[Verdict]) -> ReviewQueue:
    """Apply a verdict log onto the queue at root, skipping no entries."""
    queue = ReviewQueue(root)
    for verdict in verdicts:
        queue.apply_verdict(verdict)
    return queue


def load_verdict_log(root: Path | str) -> list[Verdict]:
    path = Path(root) / VERDICTS_FILE
    if not path.exists():
        return []
    return [Verdict.from_dict(obj) for obj in read_jsonl(path)]
