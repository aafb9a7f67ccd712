from __future__ import annotations

import json
from pathlib import Path

import pytest


def write_manifest(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def make_record(
    i: int,
    component: str = "FineGrained",
    class_label: str | None = None,
    source: str = "srcA",
    **extra,
) -> dict:
    row = {
        "id": f"img_{i:05d}",
        "source_dataset": source,
        "image_path": f"images/img_{i:05d}.jpg",
        "class_label": class_label if class_label is not None else f"Species {i % 7}",
        "component": component,
    }
    row.update(extra)
    return row


@pytest.fixture
def manifest_file(tmp_path):
    def _build(rows: list[dict], name: str = "manifest.jsonl") -> Path:
        return write_manifest(tmp_path / name, rows)

    return _build
