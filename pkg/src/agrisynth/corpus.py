"""Source-manifest ingestion, taxonomy assignment, stats, and splits.

Manifests are JSONL, one image record per line:

    {"id": ..., "source_dataset": ..., "image_path": ..., "class_label": ...,
     "component": "FineGrained"|"Disease"|"Counting",
     "category": ...?, "annotations": [[x0,y0,x1,y1], ...]?}

Counting records derive their ground-truth count from the annotation
list; no other component may carry one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .rng import Xorshift64Star, derive_seed

log = logging.getLogger(__name__)

SPLIT_ALGORITHM_VERSION = "stratified-xorshift-1"

# classes rarer than this are pooled into one shared stratum so tiny
# classes cannot produce empty train or test sides systematically
MIN_STRATUM_SIZE = 5
_POOLED_STRATUM = "\x00pooled"


class Component(str, Enum):
    FINE_GRAINED = "FineGrained"
    DISEASE = "Disease"
    COUNTING = "Counting"


class Category(str, Enum):
    CEREALS_GRASSES = "Cereals&Grasses"
    LEGUMES_PULSES = "Legumes/Pulses"
    FRUITS = "Fruits"
    VEGETABLES_TUBERS = "Vegetables&Tubers"
    INDUSTRIAL = "Industrial"
    MEDICINAL_SPICES = "Medicinal&Spices"
    FORESTRY_TIMBER = "Forestry&Timber"
    WEEDS_WILD = "Weeds/Wild"
    ORNAMENTAL_OTHER = "Ornamental/Other"


FALLBACK_CATEGORY = Category.ORNAMENTAL_OTHER


class SplitTag(str, Enum):
    TRAIN = "Train"
    TEST = "Test"
    UNASSIGNED = "Unassigned"


class ManifestParseError(ValueError):
    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class DuplicateIdError(ValueError):
    def __init__(self, record_id: str):
        super().__init__(f"duplicate record id: {record_id!r}")
        self.record_id = record_id


class UnknownComponentError(ValueError):
    def __init__(self, value: object):
        super().__init__(f"unknown component: {value!r}")
        self.value = value


class DegenerateBoxError(ValueError):
    def __init__(self, index: int, box: object):
        super().__init__(f"degenerate bounding box at index {index}: {box!r}")
        self.index = index


class EmptyCorpusError(ValueError):
    pass


@dataclass(frozen=True)
class ImageRecord:
    id: str
    source_dataset: str
    image_path: str
    class_label: str
    component: Component
    category: Category
    annotation_count: int | None = None
    split: SplitTag = SplitTag.UNASSIGNED


@dataclass(frozen=True)
class CorpusManifest:
    records: tuple[ImageRecord, ...]
    taxonomy_map: Mapping[str, Category]
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_class(self) -> dict[str, list[ImageRecord]]:
        out: dict[str, list[ImageRecord]] = {}
        for rec in self.records:
            out.setdefault(rec.class_label, []).append(rec)
        return out


@dataclass(frozen=True)
class StatsSummary:
    total_images: int
    per_component: dict[str, int]
    per_category: dict[str, int]
    class_count: int


def derive_count(annotations: Sequence[Sequence[float]]) -> int:
    """Ground-truth object count = number of valid boxes, nothing else."""
    for i, box in enumerate(annotations):
        if len(box) != 4:
            raise DegenerateBoxError(i, box)
        x0, y0, x1, y1 = box
        coords = (x0, y0, x1, y1)
        if any(not isinstance(c, (int, float)) or c != c or c in (float("inf"), float("-inf")) for c in coords):
            raise DegenerateBoxError(i, box)
        if not (x1 > x0 and y1 > y0):
            raise DegenerateBoxError(i, box)
    return len(annotations)


def _normalize_label(label: str) -> str:
    return label.strip().casefold()


def assign_category(
    class_label: str,
    taxonomy_map: Mapping[str, Category],
    warnings: list[str] | None = None,
) -> Category:
    """Look up a label after trim+casefold normalization.

    Unmapped labels land in the catch-all bucket; that is a warning,
    never an error, so ingest stays total.
    """
    key = _normalize_label(class_label)
    normalized = {_normalize_label(k): v for k, v in taxonomy_map.items()}
    if key in normalized:
        return normalized[key]
    message = f"class label {class_label!r} not in taxonomy; using {FALLBACK_CATEGORY.value}"
    log.warning(message)
    if warnings is not None:
        warnings.append(message)
    return FALLBACK_CATEGORY


def _parse_record(
    obj: dict,
    path: str,
    line: int,
    normalized_taxonomy: dict[str, Category],
    warnings: list[str],
) -> ImageRecord:
    required = ("id", "source_dataset", "image_path", "class_label", "component")
    for key in required:
        if key not in obj:
            raise ManifestParseError(path, line, f"missing field {key!r}")
        if not isinstance(obj[key], str) or not obj[key]:
            raise ManifestParseError(path, line, f"field {key!r} must be a non-empty string")
    if Path(obj["image_path"]).is_absolute():
        raise ManifestParseError(path, line, "image_path must be relative")
    try:
        component = Component(obj["component"])
    except ValueError:
        raise UnknownComponentError(obj["component"]) from None

    annotation_count: int | None = None
    if component is Component.COUNTING:
        annotations = obj.get("annotations", [])
        if not isinstance(annotations, list):
            raise ManifestParseError(path, line, "annotations must be a list of boxes")
        try:
            annotation_count = derive_count(annotations)
        except DegenerateBoxError as exc:
            raise ManifestParseError(path, line, str(exc)) from exc
    elif "annotations" in obj and obj["annotations"]:
        raise ManifestParseError(path, line, f"annotations only valid for Counting records, component is {component.value}")

    label = obj["class_label"]
    explicit = obj.get("category")
    if explicit is not None:
        try:
            category = Category(explicit)
        except ValueError:
            raise ManifestParseError(path, line, f"unknown category {explicit!r}") from None
        known = normalized_taxonomy.get(_normalize_label(label))
        if known is None:
            normalized_taxonomy[_normalize_label(label)] = category
        elif known is not category:
            warnings.append(
                f"{path}:{line}: label {label!r} maps to {known.value} elsewhere; keeping first assignment"
            )
            category = known
    else:
        key = _normalize_label(label)
        category = normalized_taxonomy.get(key)
        if category is None:
            category = FALLBACK_CATEGORY
            normalized_taxonomy[key] = category
            warnings.append(f"{path}:{line}: class label {label!r} not in taxonomy; using {FALLBACK_CATEGORY.value}")

    return ImageRecord(
        id=obj["id"],
        source_dataset=obj["source_dataset"],
        image_path=obj["image_path"],
        class_label=label,
        component=component,
        category=category,
        annotation_count=annotation_count,
    )


def ingest_manifest(
    paths: Sequence[Path | str],
    taxonomy: Mapping[str, str | Category] | None = None,
) -> CorpusManifest:
    """Merge one or more JSONL manifests into a single corpus.

    Ids must be unique across all files. An optional seed taxonomy maps
    class labels to category names; records may also carry an explicit
    category, and anything unresolved falls back with a warning.
    """
    normalized_taxonomy: dict[str, Category] = {}
    for key, value in (taxonomy or {}).items():
        normalized_taxonomy[_normalize_label(key)] = Category(value)

    records: list[ImageRecord] = []
    seen: set[str] = set()
    warnings: list[str] = []
    for path in paths:
        path_str = str(path)
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ManifestParseError(path_str, line_no, f"invalid JSON: {exc.msg}") from exc
                if not isinstance(obj, dict):
                    raise ManifestParseError(path_str, line_no, "record must be a JSON object")
                record = _parse_record(obj, path_str, line_no, normalized_taxonomy, warnings)
                if record.id in seen:
                    raise DuplicateIdError(record.id)
                seen.add(record.id)
                records.append(record)

    taxonomy_map = {key: cat for key, cat in normalized_taxonomy.items()}
    return CorpusManifest(records=tuple(records), taxonomy_map=taxonomy_map, warnings=tuple(warnings))


def corpus_stats(manifest: CorpusManifest) -> StatsSummary:
    per_component: dict[str, int] = {}
    per_category: dict[str, int] = {}
    labels: set[str] = set()
    for rec in manifest.records:
        per_component[rec.component.value] = per_component.get(rec.component.value, 0) + 1
        per_category[rec.category.value] = per_category.get(rec.category.value, 0) + 1
        labels.add(rec.class_label)
    return StatsSummary(
        total_images=len(manifest.records),
        per_component=per_component,
        per_category=per_category,
        class_count=len(labels),
    )


def _train_size(n: int, ratio: float) -> int:
    # round-half-up keeps |train| within 1 of ratio*n for every stratum
    return min(n, int(n * ratio + 0.5))


def split_corpus(
    manifest: CorpusManifest, ratio: float, seed: int
) -> tuple[list[str], list[str]]:
    """Deterministic stratified split; returns sorted (train, test) ids.

    Classes with at least MIN_STRATUM_SIZE records form their own
    stratum; rarer classes share a pooled stratum. Each stratum is
    shuffled by a generator seeded from (seed, stratum key), so the
    result does not depend on record order in the manifest.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0,1), got {ratio}")
    if not manifest.records:
        raise EmptyCorpusError("cannot split an empty corpus")

    strata: dict[str, list[str]] = {}
    for label, recs in manifest.by_class().items():
        key = label if len(recs) >= MIN_STRATUM_SIZE else _POOLED_STRATUM
        strata.setdefault(key, []).extend(r.id for r in recs)

    train: list[str] = []
    test: list[str] = []
    for key in sorted(strata):
        ids = sorted(strata[key])
        rng = Xorshift64Star(derive_seed(seed, key))
        rng.shuffle(ids)
        k = _train_size(len(ids), ratio)
        train.extend(ids[:k])
        test.extend(ids[k:])
    return sorted(train), sorted(test)


def apply_split(
    manifest: CorpusManifest, train_ids: Iterable[str], test_ids: Iterable[str]
) -> CorpusManifest:
    train = set(train_ids)
    test = set(test_ids)
    tagged = tuple(
        replace(
            rec,
            split=SplitTag.TRAIN
            if rec.id in train
            else SplitTag.TEST
            if rec.id in test
            else SplitTag.UNASSIGNED,
        )
        for rec in manifest.records
    )
    return replace(manifest, records=tagged)
