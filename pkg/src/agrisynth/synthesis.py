"""Three-stage QA synthesis: captioning, knowledge retrieval, generation.

Stage I conditions the caption on the ground-truth label (and object
count, when one exists) so the model cannot drift from the annotation.
Stage II retrieves per-class reference knowledge in batches. Stage III
turns caption + verified knowledge into exactly five QA pairs, one per
mandated category, with the ground-truth count injected for counting
images and enforced in the Quantification answer.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .config import RunConfig
from .corpus import ImageRecord
from .endpoints import ChatClient
from .jsonio import NoJsonFoundError, StrictParseError, canonical_json, extract_json, sha256_hex
from .prompts import TemplateName, render_prompt
from .review import FINAL_STATES, KnowledgeEntry, KnowledgeKind, ReviewState
from .rng import Xorshift64Star, derive_seed

log = logging.getLogger(__name__)

# single '.' after one of these does not end a sentence
ABBREVIATIONS = frozenset(
    "e.g i.e etc vs cf al spp sp var subsp cv approx ca no fig dr mr mrs ms st".split()
)

_SENTENCE_END_RE = re.compile(r"[.!?]+(?=\s|$)")
_DIGIT_RUN_RE = re.compile(r"\d+")

CAPTION_MIN_SENTENCES = 3
CAPTION_MAX_SENTENCES = 5
QA_PAIRS_PER_IMAGE = 5

FROZEN_TIMESTAMP = "1970-01-01T00:00:00+00:00"


class QACategory(str, Enum):
    IDENTIFICATION = "Identification"
    VISUAL_REASONING = "VisualReasoning"
    HEALTH_CONDITION = "HealthCondition"
    CULTIVATION_KNOWLEDGE = "CultivationKnowledge"
    QUANTIFICATION = "Quantification"


# accepts both the generation prompt's slot wording and the canonical
# names; keys are casefolded with whitespace collapsed
_CATEGORY_ALIASES = {
    "identification": QACategory.IDENTIFICATION,
    "visual reasoning": QACategory.VISUAL_REASONING,
    "visualreasoning": QACategory.VISUAL_REASONING,
    "condition & health": QACategory.HEALTH_CONDITION,
    "condition and health": QACategory.HEALTH_CONDITION,
    "health condition": QACategory.HEALTH_CONDITION,
    "healthcondition": QACategory.HEALTH_CONDITION,
    "cultivation knowledge": QACategory.CULTIVATION_KNOWLEDGE,
    "cultivationknowledge": QACategory.CULTIVATION_KNOWLEDGE,
    "quantification": QACategory.QUANTIFICATION,
    "anatomy/detail": QACategory.QUANTIFICATION,
    "anatomy / detail": QACategory.QUANTIFICATION,
    "anatomy": QACategory.QUANTIFICATION,
}


class ValidationFailedError(ValueError):
    def __init__(self, reason: str, raw_response: str = ""):
        super().__init__(reason)
        self.reason = reason
        self.raw_response = raw_response


class JsonShapeError(ValueError):
    pass


class MissingClassError(ValueError):
    def __init__(self, names: Sequence[str], retrieved: Sequence[KnowledgeEntry] = ()):
        super().__init__(f"no valid description for: {', '.join(sorted(names))}")
        self.names = tuple(names)
        self.retrieved = tuple(retrieved)


@dataclass(frozen=True)
class Caption:
    image_id: str
    text: str
    injected_label: str
    model_id: str
    created_at: str

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "text": self.text,
            "injected_label": self.injected_label,
            "model_id": self.model_id,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Caption":
        return cls(
            image_id=obj["image_id"],
            text=obj["text"],
            injected_label=obj["injected_label"],
            model_id=obj["model_id"],
            created_at=obj["created_at"],
        )


@dataclass(frozen=True)
class QAPair:
    image_id: str
    question: str
    answer: str
    category: QACategory
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "question": self.question,
            "answer": self.answer,
            "category": self.category.value,
            "provenance": dict(self.provenance),
        }


def split_sentences(text: str) -> list[str]:
    """Sentence boundaries: [.!?]+ before whitespace/EOF, skipping a
    single '.' that follows a known abbreviation."""
    sentences = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        if match.group() == ".":
            before = text[start : match.start()].rsplit(None, 1)
            word = before[-1].casefold().lstrip("(\"'") if before else ""
            if word in ABBREVIATIONS:
                continue
        piece = text[start : match.end()].strip()
        if any(ch.isalnum() for ch in piece):
            sentences.append(piece)
        start = match.end()
    tail = text[start:].strip()
    if any(ch.isalnum() for ch in tail):
        sentences.append(tail)
    return sentences


def word_count(text: str) -> int:
    return len(text.split())


def _retry_temperature(base: float, seed: int, label: str, attempt: int) -> float:
    if attempt == 0:
        return base
    rng = Xorshift64Star(derive_seed(seed, f"temp:{label}:{attempt}"))
    return round(rng.uniform(0.1, 1.0), 3)


def stage1_extra_details(record: ImageRecord) -> str:
    """Binding for the caption prompt's "the image contains ..." slot."""
    if record.annotation_count is not None:
        return f"{record.annotation_count} {record.class_label}"
    return record.class_label


def stage1_caption(
    record: ImageRecord, client: ChatClient, cfg: RunConfig, created_at: str = FROZEN_TIMESTAMP
) -> Caption:
    extra = stage1_extra_details(record)
    prompt = render_prompt(TemplateName.STAGE1_CAPTION, {"extra_details": extra})
    last_reason = "no attempts made"
    raw = ""
    for attempt in range(max(1, cfg.synth.max_retries)):
        raw = client.complete(
            [{"role": "user", "content": prompt}],
            model=cfg.models.stage1,
            temperature=_retry_temperature(
                cfg.synth.stage12_temperature, cfg.synth.seed, record.id, attempt
            ),
            max_tokens=cfg.synth.max_tokens,
        )
        text = raw.strip()
        if not text:
            last_reason = "empty caption"
            continue
        n = len(split_sentences(text))
        if not CAPTION_MIN_SENTENCES <= n <= CAPTION_MAX_SENTENCES:
            last_reason = f"sentence count {n} outside [{CAPTION_MIN_SENTENCES},{CAPTION_MAX_SENTENCES}]"
            continue
        if record.class_label.casefold() not in text.casefold():
            # the paper's pipeline prevents label drift but gives no
            # regeneration rule; absence is logged, not fatal
            log.warning("caption for %s does not mention label %r", record.id, record.class_label)
        return Caption(
            image_id=record.id,
            text=text,
            injected_label=extra,
            model_id=cfg.models.stage1,
            created_at=created_at,
        )
    raise ValidationFailedError(last_reason, raw)


def _coerce_description(value: object) -> tuple[str, tuple[str, ...]]:
    """Accept either "text" or {"description": text, "citations": [...]}."""
    if isinstance(value, str):
        return value, ()
    if isinstance(value, dict) and isinstance(value.get("description"), str):
        citations = value.get("citations") or value.get("sources") or ()
        if not isinstance(citations, (list, tuple)):
            citations = ()
        return value["description"], tuple(str(c) for c in citations)
    raise JsonShapeError(f"description must be a string or object, got {type(value).__name__}")


def _stage2_prompt(batch: Sequence[str], kind: KnowledgeKind) -> str:
    names_json = canonical_json(list(batch))
    if kind is KnowledgeKind.DISEASE:
        return render_prompt(TemplateName.STAGE2_DISEASE, {"disease_class_names": names_json})
    return render_prompt(TemplateName.STAGE2_SPECIES, {"class_names": names_json})


def _stage2_messages(prompt: str, notes: Mapping[str, str]) -> list[dict]:
    messages = []
    if notes:
        joined = "; ".join(f"{name}: {note}" for name, note in sorted(notes.items()) if note)
        if joined:
            messages.append(
                {
                    "role": "system",
                    "content": f"Reviewer corrections for a previous attempt must be addressed: {joined}",
                }
            )
    messages.append({"role": "user", "content": prompt})
    return messages


def _request_descriptions(
    batch: Sequence[str],
    kind: KnowledgeKind,
    client: ChatClient,
    cfg: RunConfig,
    notes: Mapping[str, str],
    attempt: int,
) -> dict[str, tuple[str, tuple[str, ...]]]:
    prompt = _stage2_prompt(batch, kind)
    raw = client.complete(
        _stage2_messages(prompt, {k: v for k, v in notes.items() if k in batch}),
        model=cfg.models.stage2,
        temperature=_retry_temperature(
            cfg.synth.stage12_temperature, cfg.synth.seed, f"stage2:{batch[0]}", attempt
        ),
        max_tokens=cfg.synth.max_tokens,
    )
    try:
        parsed = extract_json(raw)
    except (NoJsonFoundError, StrictParseError) as exc:
        raise JsonShapeError(f"stage-2 response is not JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise JsonShapeError(f"stage-2 response must be an object map, got {type(parsed).__name__}")

    normalized = {str(k).strip().casefold(): v for k, v in parsed.items()}
    out: dict[str, tuple[str, tuple[str, ...]]] = {}
    for name in batch:
        value = parsed.get(name, normalized.get(name.strip().casefold()))
        if value is None:
            continue
        description, citations = _coerce_description(value)
        if cfg.synth.min_words <= word_count(description) <= cfg.synth.max_words:
            out[name] = (description, citations)
    return out


def stage2_retrieve(
    class_batch: Sequence[str],
    kind: KnowledgeKind,
    client: ChatClient,
    cfg: RunConfig,
    corrective_notes: Mapping[str, str] | None = None,
) -> list[KnowledgeEntry]:
    """Retrieve Pending knowledge entries for a batch of class labels.

    Classes whose description is missing or out of the word-count
    bounds are re-requested individually; whatever is still invalid
    after the retry budget raises MissingClassError carrying the
    entries that did succeed.
    """
    if not class_batch:
        raise ValueError("class_batch must be non-empty")
    if len(class_batch) > cfg.synth.stage2_batch:
        raise ValueError(
            f"batch size {len(class_batch)} exceeds stage2_batch={cfg.synth.stage2_batch}"
        )
    notes = dict(corrective_notes or {})
    results: dict[str, tuple[str, tuple[str, ...]]] = {}
    last_shape_error: JsonShapeError | None = None

    try:
        results.update(_request_descriptions(class_batch, kind, client, cfg, notes, 0))
    except JsonShapeError as exc:
        last_shape_error = exc

    # out-of-bounds or omitted classes get individual follow-up requests
    for name in [n for n in class_batch if n not in results]:
        for attempt in range(1, max(2, cfg.synth.max_retries)):
            try:
                results.update(_request_descriptions([name], kind, client, cfg, notes, attempt))
            except JsonShapeError as exc:
                last_shape_error = exc
            if name in results:
                break
    missing = [n for n in class_batch if n not in results]
    if missing and not results and last_shape_error is not None:
        raise last_shape_error

    entries = [
        KnowledgeEntry(
            class_label=name,
            kind=kind,
            description=results[name][0],
            source_citations=results[name][1],
            state=ReviewState.PENDING,
        )
        for name in class_batch
        if name in results
    ]
    if missing:
        raise MissingClassError(missing, entries)
    return entries


def quantification_answer_has_count(answer: str, count: int) -> bool:
    """The injected count must appear as a whole digit run."""
    return str(count) in _DIGIT_RUN_RE.findall(answer)


def _parse_qa_items(raw: str, record: ImageRecord) -> list[tuple[QACategory, str, str]]:
    try:
        parsed = extract_json(raw)
    except (NoJsonFoundError, StrictParseError) as exc:
        raise ValidationFailedError(f"response is not JSON: {exc}", raw) from exc
    if not isinstance(parsed, list):
        raise ValidationFailedError(f"expected a JSON array, got {type(parsed).__name__}", raw)
    if len(parsed) != QA_PAIRS_PER_IMAGE:
        raise ValidationFailedError(f"count={len(parsed)}", raw)

    items: list[tuple[QACategory, str, str]] = []
    seen: set[QACategory] = set()
    for obj in parsed:
        if not isinstance(obj, dict):
            raise ValidationFailedError("array items must be objects", raw)
        question = obj.get("question")
        answer = obj.get("answer")
        raw_category = obj.get("category")
        if not (isinstance(question, str) and question.strip()):
            raise ValidationFailedError("empty question", raw)
        if not (isinstance(answer, str) and answer.strip()):
            raise ValidationFailedError("empty answer", raw)
        if not isinstance(raw_category, str):
            raise ValidationFailedError("missing category", raw)
        key = " ".join(raw_category.split()).casefold()
        category = _CATEGORY_ALIASES.get(key)
        if category is None:
            raise ValidationFailedError(f"unknown category {raw_category!r}", raw)
        if category in seen:
            raise ValidationFailedError(f"duplicate category {category.value}", raw)
        seen.add(category)
        items.append((category, question.strip(), answer.strip()))

    if record.annotation_count is not None:
        answer = next(a for c, q, a in items if c is QACategory.QUANTIFICATION)
        if not quantification_answer_has_count(answer, record.annotation_count):
            raise ValidationFailedError(
                f"Quantification answer lacks count {record.annotation_count}", raw
            )
    return items


def stage3_class_info(knowledge: KnowledgeEntry, record: ImageRecord) -> str:
    info = knowledge.exported_text
    if record.annotation_count is not None:
        info += (
            f"\nGround truth: the image contains exactly {record.annotation_count} "
            "countable instances; the Quantification answer must state this number."
        )
    return info


def stage3_generate(
    record: ImageRecord,
    caption: Caption,
    knowledge: KnowledgeEntry,
    client: ChatClient,
    cfg: RunConfig,
) -> list[QAPair]:
    if knowledge.state not in FINAL_STATES:
        raise ValidationFailedError(
            f"knowledge for {record.class_label!r} is {knowledge.state.value}, not reviewer-approved"
        )
    info = stage3_class_info(knowledge, record)
    prompt = render_prompt(TemplateName.STAGE3_QA, {"class_info": info, "caption": caption.text})
    provenance = {
        "caption_hash": sha256_hex(caption.text),
        "knowledge_hash": sha256_hex(knowledge.exported_text),
        "prompt_hash": sha256_hex(prompt),
    }
    last: ValidationFailedError | None = None
    for attempt in range(max(1, cfg.synth.max_retries)):
        raw = client.complete(
            [{"role": "user", "content": prompt}],
            model=cfg.models.stage3,
            temperature=_retry_temperature(
                cfg.synth.stage3_temperature, cfg.synth.seed, record.id, attempt
            ),
            max_tokens=cfg.synth.max_tokens,
        )
        try:
            items = _parse_qa_items(raw, record)
        except ValidationFailedError as exc:
            last = exc
            continue
        return [
            QAPair(
                image_id=record.id,
                question=question,
                answer=answer,
                category=category,
                provenance=provenance,
            )
            for category, question, answer in items
        ]
    assert last is not None
    raise last
