"""Canonical JSON serialization and tolerant JSON extraction.

Every artifact this package writes goes through canonical_json so that
reruns produce byte-identical files: keys sorted, separators fixed,
UTF-8, one LF per record.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Any, Iterable

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*")


class NoJsonFoundError(ValueError):
    """No balanced top-level JSON array or object in the text."""


class StrictParseError(ValueError):
    """A balanced span was found but is not strict JSON."""

    def __init__(self, position: int, reason: str):
        super().__init__(f"invalid JSON at position {position}: {reason}")
        self.position = position
        self.reason = reason


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def write_jsonl(path: Path | str, rows: Iterable[Any]) -> int:
    """Write rows as canonical JSONL; returns the number of lines."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(canonical_json(row))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: Path | str) -> list[Any]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def extract_json(text: str) -> Any:
    """Pull the first balanced top-level JSON array/object out of prose.

    Markdown fence markers are stripped first. The scan is string-aware,
    so braces inside JSON strings do not affect the depth count. The
    balanced span itself must be strict JSON; there is no repair step.
    """
    cleaned = _FENCE_RE.sub("", text)
    start = None
    depth = 0
    in_string = False
    escaped = False
    for i, ch in enumerate(cleaned):
        if start is None:
            if ch in "{[":
                start = i
                depth = 1
            continue
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                span = cleaned[start : i + 1]
                try:
                    return json.loads(span)
                except json.JSONDecodeError as exc:
                    raise StrictParseError(start + exc.pos, exc.msg) from exc
    raise NoJsonFoundError("no balanced top-level JSON value in text")
