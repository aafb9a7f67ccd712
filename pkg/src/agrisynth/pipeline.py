"""Staged synthesis orchestration over a corpus manifest.

Runs caption generation for every record, knowledge retrieval once per
distinct class, the human review gate, then QA generation for every
record whose class survived review. Progress is persisted append-only
per item so an interrupted run resumes where it stopped, and all final
artifacts are rewritten sorted so reruns and worker counts never change
bytes. Timestamps are frozen in mock mode for the same reason.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .config import RunConfig
from .corpus import Component, CorpusManifest, ImageRecord
from .endpoints import ChatClient, EndpointError
from .jsonio import canonical_json, sha256_hex
from .review import KnowledgeKind, ReviewQueue, ReviewState
from .synthesis import (
    FROZEN_TIMESTAMP,
    Caption,
    JsonShapeError,
    MissingClassError,
    QACategory,
    ValidationFailedError,
    stage1_caption,
    stage2_retrieve,
    stage3_generate,
)

log = logging.getLogger(__name__)

CATEGORY_ORDER = {category: slot for slot, category in enumerate(QACategory)}

CAPTIONS_FILE = "captions.jsonl"
KNOWLEDGE_FILE = "knowledge.jsonl"
QA_FILE = "qa.jsonl"
FAILURES_FILE = "failures.jsonl"
RUN_STATE_FILE = "run_state.json"
PROGRESS_DIR = "progress"
REVIEW_DIR = "review"


class WorkdirConflictError(RuntimeError):
    pass


class ArtifactRegistry:
    """Maps workdir-relative artifact paths to the producing config hash.

    A workdir whose registered files were written under a different
    hash is refused unless the run is forced, in which case stamps are
    overwritten as files are rewritten.
    """

    def __init__(self, workdir: Path):
        self.workdir = workdir
        self.path = workdir / ".artifacts.json"
        self._entries: dict[str, str] = {}
        if self.path.exists():
            self._entries = dict(json.loads(self.path.read_text(encoding="utf-8")))

    def check(self, config_hash: str, force: bool = False) -> None:
        stale = sorted(p for p, h in self._entries.items() if h != config_hash)
        if stale and not force:
            raise WorkdirConflictError(
                f"workdir {self.workdir} holds artifacts from a different config "
                f"({', '.join(stale)}); rerun with force to overwrite"
            )

    def stamp(self, relpath: str, config_hash: str) -> None:
        if self._entries.get(relpath) != config_hash:
            self._entries[relpath] = config_hash
            self._save()

    def hash_for(self, relpath: str) -> str | None:
        return self._entries.get(relpath)

    def _save(self) -> None:
        tmp = self.path.with_suffix(".json.tmp")
        tmp.write_text(canonical_json(self._entries) + "\n", encoding="utf-8")
        tmp.replace(self.path)


@dataclass
class RunState:
    run_id: str
    config_hash: str
    manifest_hash: str
    status: str
    started_at: str
    finished_at: str | None = None
    captions: int = 0
    knowledge_entries: int = 0
    qa_pairs: int = 0
    failures: int = 0

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "manifest_hash": self.manifest_hash,
            "status": self.status,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "counts": {
                "captions": self.captions,
                "knowledge_entries": self.knowledge_entries,
                "qa_pairs": self.qa_pairs,
                "failures": self.failures,
            },
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "RunState":
        counts = obj.get("counts", {})
        return cls(
            run_id=obj["run_id"],
            config_hash=obj["config_hash"],
            manifest_hash=obj["manifest_hash"],
            status=obj["status"],
            started_at=obj["started_at"],
            finished_at=obj.get("finished_at"),
            captions=counts.get("captions", 0),
            knowledge_entries=counts.get("knowledge_entries", 0),
            qa_pairs=counts.get("qa_pairs", 0),
            failures=counts.get("failures", 0),
        )


def pipeline_clock(cfg: RunConfig) -> str:
    if cfg.endpoints.mock:
        return FROZEN_TIMESTAMP
    return datetime.now(timezone.utc).isoformat()


def manifest_fingerprint(manifest: CorpusManifest) -> str:
    return sha256_hex(canonical_json(sorted(manifest.ids())))[:16]


def class_kinds(manifest: CorpusManifest) -> dict[str, KnowledgeKind]:
    """Disease-component classes get the disease retrieval prompt,
    everything else the botanical one. First record wins on conflict."""
    kinds: dict[str, KnowledgeKind] = {}
    for record in sorted(manifest.records, key=lambda r: r.id):
        kind = (
            KnowledgeKind.DISEASE
            if record.component is Component.DISEASE
            else KnowledgeKind.SPECIES
        )
        previous = kinds.setdefault(record.class_label, kind)
        if previous is not kind:
            log.warning("class %r spans components; keeping kind %s", record.class_label, previous.value)
    return kinds


def _read_progress(path: Path) -> list[dict]:
    """Tolerates a torn final line from an interrupted writer."""
    rows: list[dict] = []
    if not path.exists():
        return rows
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                break
    return rows


class _ProgressWriter:
    """Single serialized writer for append-only progress files."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._lock = threading.Lock()
        self._fh = path.open("a", encoding="utf-8", newline="\n")

    def append(self, obj: dict) -> None:
        with self._lock:
            self._fh.write(canonical_json(obj) + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _write_artifact(path: Path, lines: Sequence[str]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
    tmp.replace(path)


def _pool_map(width: int, fn: Callable, items: Sequence) -> None:
    """Apply fn over items with a bounded pool; fn does its own writing."""
    if width <= 1 or len(items) <= 1:
        for item in items:
            fn(item)
        return
    with ThreadPoolExecutor(max_workers=width) as pool:
        for future in [pool.submit(fn, item) for item in items]:
            future.result()


def build_chat_client(cfg: RunConfig) -> ChatClient:
    if cfg.endpoints.mock:
        from .mocks import MockChatClient

        fixtures = Path(cfg.endpoints.mock_fixtures) if cfg.endpoints.mock_fixtures else None
        return MockChatClient(seed=cfg.synth.seed, fixture_dir=fixtures)
    from .endpoints import HttpChatClient

    return HttpChatClient(
        cfg.endpoints.chat_url,
        auth_env=cfg.endpoints.chat_auth_env,
        timeout=cfg.endpoints.timeout,
        max_retries=cfg.synth.max_retries,
    )


def run_pipeline(
    manifest: CorpusManifest,
    cfg: RunConfig,
    chat: ChatClient | None = None,
    clock: str | None = None,
) -> RunState:
    """Execute (or resume) the full synthesis run under cfg.workdir.

    Returns the final RunState: status "awaiting_review" when knowledge
    entries still need verdicts, else "complete".
    """
    workdir = Path(cfg.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    registry = ArtifactRegistry(workdir)
    registry.check(cfg.config_hash, force=cfg.force)

    now = clock if clock is not None else pipeline_clock(cfg)
    fingerprint = manifest_fingerprint(manifest)
    state_path = workdir / RUN_STATE_FILE
    if state_path.exists():
        state = RunState.from_dict(json.loads(state_path.read_text(encoding="utf-8")))
        if state.config_hash != cfg.config_hash and not cfg.force:
            raise WorkdirConflictError(
                f"run in {workdir} was started with config {state.config_hash}, "
                f"current is {cfg.config_hash}; rerun with force to overwrite"
            )
        if state.manifest_hash != fingerprint and not cfg.force:
            raise WorkdirConflictError(
                f"run in {workdir} used a different manifest ({state.manifest_hash}); "
                "rerun with force to overwrite"
            )
        state = replace(state, config_hash=cfg.config_hash, manifest_hash=fingerprint, status="running")
    else:
        state = RunState(
            run_id=cfg.config_hash[:12],
            config_hash=cfg.config_hash,
            manifest_hash=fingerprint,
            status="running",
            started_at=now,
        )

    chat = chat if chat is not None else build_chat_client(cfg)
    records = sorted(manifest.records, key=lambda r: r.id)
    kinds = class_kinds(manifest)
    queue = ReviewQueue(workdir / REVIEW_DIR)

    progress_dir = workdir / PROGRESS_DIR
    captions_progress = progress_dir / CAPTIONS_FILE
    qa_progress = progress_dir / QA_FILE
    failures_progress = progress_dir / FAILURES_FILE

    captions: dict[str, Caption] = {
        row["image_id"]: Caption.from_dict(row) for row in _read_progress(captions_progress)
    }
    failure_rows: list[dict] = _read_progress(failures_progress)
    failed_keys = {(row["stage"], row["item"]) for row in failure_rows}
    failure_writer = _ProgressWriter(failures_progress)
    failure_lock = threading.Lock()

    def record_failure(stage: str, item: str, reason: str) -> None:
        key = (stage, item)
        with failure_lock:
            if key in failed_keys:
                return
            failed_keys.add(key)
        row = {"stage": stage, "item": item, "reason": reason}
        failure_rows.append(row)
        failure_writer.append(row)

    try:
        # Stage I: captions for every record not yet done or failed
        caption_writer = _ProgressWriter(captions_progress)
        registry.stamp(f"{PROGRESS_DIR}/{CAPTIONS_FILE}", cfg.config_hash)
        registry.stamp(f"{PROGRESS_DIR}/{FAILURES_FILE}", cfg.config_hash)

        def do_caption(record: ImageRecord) -> None:
            try:
                caption = stage1_caption(record, chat, cfg, created_at=now)
            except (EndpointError, ValidationFailedError) as exc:
                record_failure("stage1", record.id, str(exc))
                return
            captions[record.id] = caption
            caption_writer.append(caption.to_dict())

        todo = [
            r
            for r in records
            if r.id not in captions and ("stage1", r.id) not in failed_keys
        ]
        _pool_map(cfg.synth.width, do_caption, todo)
        caption_writer.close()

        # Stage II: one entry per distinct class; rejected classes
        # re-enter with the reviewer note until the retry budget is spent
        flags = queue.reretrieval_flags()
        existing = {entry.class_label: entry for entry in queue.entries()}
        pending_classes: list[tuple[str, str | None]] = []
        for label in sorted(kinds):
            entry = existing.get(label)
            if entry is None:
                pending_classes.append((label, None))
            elif entry.state is ReviewState.REJECTED:
                if entry.retrieval_round < cfg.synth.max_reretrievals:
                    pending_classes.append((label, flags.get(label)))
                else:
                    record_failure(
                        "stage2",
                        f"class:{label}",
                        f"rejected after {entry.retrieval_round} re-retrievals",
                    )

        by_kind: dict[KnowledgeKind, list[tuple[str, str | None]]] = {}
        for label, note in pending_classes:
            by_kind.setdefault(kinds[label], []).append((label, note))
        for kind in sorted(by_kind, key=lambda k: k.value):
            group = by_kind[kind]
            for start in range(0, len(group), cfg.synth.stage2_batch):
                batch = group[start : start + cfg.synth.stage2_batch]
                labels = [label for label, _ in batch]
                notes = {label: note for label, note in batch if note}
                try:
                    entries = stage2_retrieve(labels, kind, chat, cfg, corrective_notes=notes)
                except MissingClassError as exc:
                    entries = list(exc.retrieved)
                    for name in exc.names:
                        record_failure("stage2", f"class:{name}", "no valid description after retries")
                except (EndpointError, JsonShapeError) as exc:
                    for name in labels:
                        record_failure("stage2", f"class:{name}", str(exc))
                    continue
                if entries:
                    queue.enqueue(entries)
        registry.stamp(f"{REVIEW_DIR}/entries.jsonl", cfg.config_hash)

        # Review gate
        if cfg.synth.auto_approve:
            queue.approve_all_pending("auto-approve", now)
        registry.stamp(f"{REVIEW_DIR}/verdicts.jsonl", cfg.config_hash)
        if queue.stats()["pending"]:
            state = replace(
                state,
                status="awaiting_review",
                captions=len(captions),
                knowledge_entries=queue.stats()["total"],
                failures=len(failure_rows),
            )
            _save_state(state_path, state, registry, cfg.config_hash)
            return state

        # Stage III: QA for every record whose class survived review
        approved = {entry.class_label: entry for entry in queue.export_approved()}
        qa_rows: dict[str, dict] = {row["image_id"]: row for row in _read_progress(qa_progress)}
        qa_writer = _ProgressWriter(qa_progress)
        registry.stamp(f"{PROGRESS_DIR}/{QA_FILE}", cfg.config_hash)

        def do_qa(record: ImageRecord) -> None:
            caption = captions.get(record.id)
            if caption is None:
                record_failure("stage3", record.id, "no caption available")
                return
            knowledge = approved.get(record.class_label)
            if knowledge is None:
                record_failure("stage3", record.id, f"class {record.class_label!r} not approved")
                return
            try:
                pairs = stage3_generate(record, caption, knowledge, chat, cfg)
            except (EndpointError, ValidationFailedError) as exc:
                record_failure("stage3", record.id, str(exc))
                return
            row = {
                "image_id": record.id,
                "pairs": [p.to_dict() for p in sorted(pairs, key=lambda p: CATEGORY_ORDER[p.category])],
            }
            qa_rows[record.id] = row
            qa_writer.append(row)

        todo = [
            r
            for r in records
            if r.id not in qa_rows and ("stage3", r.id) not in failed_keys
        ]
        _pool_map(cfg.synth.width, do_qa, todo)
        qa_writer.close()
    finally:
        failure_writer.close()

    # Finalize: sorted canonical artifacts, atomic replace
    known_ids = {r.id for r in records}
    caption_lines = [
        canonical_json(captions[image_id].to_dict())
        for image_id in sorted(captions)
        if image_id in known_ids
    ]
    _write_artifact(workdir / CAPTIONS_FILE, caption_lines)
    registry.stamp(CAPTIONS_FILE, cfg.config_hash)

    knowledge_lines = [
        canonical_json(entry.to_dict())
        for entry in sorted(queue.entries(), key=lambda e: e.class_label)
    ]
    _write_artifact(workdir / KNOWLEDGE_FILE, knowledge_lines)
    registry.stamp(KNOWLEDGE_FILE, cfg.config_hash)

    qa_lines = [
        canonical_json(pair)
        for image_id in sorted(qa_rows)
        if image_id in known_ids
        for pair in qa_rows[image_id]["pairs"]
    ]
    _write_artifact(workdir / QA_FILE, qa_lines)
    registry.stamp(QA_FILE, cfg.config_hash)

    failure_lines = [
        canonical_json(row) for row in sorted(failure_rows, key=lambda r: (r["stage"], r["item"]))
    ]
    _write_artifact(workdir / FAILURES_FILE, failure_lines)
    registry.stamp(FAILURES_FILE, cfg.config_hash)

    state = replace(
        state,
        status="complete",
        finished_at=now,
        captions=len(caption_lines),
        knowledge_entries=len(knowledge_lines),
        qa_pairs=len(qa_lines),
        failures=len(failure_lines),
    )
    _save_state(state_path, state, registry, cfg.config_hash)
    return state


def _save_state(path: Path, state: RunState, registry: ArtifactRegistry, config_hash: str) -> None:
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(canonical_json(state.to_dict()) + "\n", encoding="utf-8")
    tmp.replace(path)
    registry.stamp(RUN_STATE_FILE, config_hash)
