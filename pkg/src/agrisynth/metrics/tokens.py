"""Canonical tokenizer shared by every lexical metric.

One tokenizer for the whole metric suite so scores stay comparable:
NFC-normalize, casefold, then take maximal runs of characters that are
neither Unicode whitespace nor Unicode punctuation (category P*). That
makes interior punctuation a delimiter too, so "state--wide" splits the
same way "state wide" does.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[str, ...]
    source_text: str

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def _is_delimiter(ch: str) -> bool:
    return ch.isspace() or unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> TokenSeq:
    folded = unicodedata.normalize("NFC", text).casefold()
    tokens: list[str] = []
    current: list[str] = []
    for ch in folded:
        if _is_delimiter(ch):
            if current:
                tokens.append("".join(current))
                current = []
        else:
            current.append(ch)
    if current:
        tokens.append("".join(current))
    return TokenSeq(tokens=tuple(tokens), source_text=text)
