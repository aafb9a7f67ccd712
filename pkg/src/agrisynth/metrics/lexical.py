"""Lexical metric kernels: corpus BLEU-4, ROUGE-2 F1, METEOR-lite.

All three consume TokenSeq values from the shared tokenizer. BLEU is
corpus-pooled and unsmoothed: clipped n-gram counts are summed over all
pairs before the geometric mean, and any empty pooled precision zeroes
the score. METEOR-lite runs the exact and stem alignment stages only,
with the classic alpha=0.9, beta=3, gamma=0.5 parameters.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Callable, Mapping, Sequence

from .porter import porter_stem
from .tokens import TokenSeq


class LengthMismatchError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class MetricScore:
    name: str
    value: float
    components: Mapping[str, float] = field(default_factory=dict)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidates: Sequence[TokenSeq], references: Sequence[TokenSeq]) -> MetricScore:
    """Corpus-level BLEU with uniform quarter weights over 1..4-grams."""
    if len(candidates) != len(references) or not candidates:
        raise LengthMismatchError(
            f"need equal non-empty corpora, got {len(candidates)} candidates "
            f"and {len(references)} references"
        )
    components: dict[str, float] = {}
    precisions: list[float] = []
    for n in range(1, 5):
        matched = 0
        total = 0
        for candidate, reference in zip(candidates, references):
            cand_counts = _ngram_counts(candidate.tokens, n)
            ref_counts = _ngram_counts(reference.tokens, n)
            matched += sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
            total += max(len(candidate.tokens) - n + 1, 0)
        p = matched / total if total else 0.0
        precisions.append(p)
        components[f"p{n}"] = p

    cand_len = sum(len(c.tokens) for c in candidates)
    ref_len = sum(len(r.tokens) for r in references)
    if cand_len == 0:
        bp = 0.0
    elif cand_len < ref_len:
        bp = math.exp(1 - ref_len / cand_len)
    else:
        bp = 1.0
    components["brevity_penalty"] = bp
    components["candidate_length"] = float(cand_len)
    components["reference_length"] = float(ref_len)

    if any(p == 0.0 for p in precisions) or bp == 0.0:
        value = 0.0
    else:
        value = bp * math.exp(sum(math.log(p) for p in precisions) / 4)
    return MetricScore(name="bleu4", value=value, components=components)


def rouge2(candidate: TokenSeq, reference: TokenSeq) -> MetricScore:
    """Bigram multiset F1; either side without bigrams scores zero."""
    cand_counts = _ngram_counts(candidate.tokens, 2)
    ref_counts = _ngram_counts(reference.tokens, 2)
    cand_total = sum(cand_counts.values())
    ref_total = sum(ref_counts.values())
    overlap = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    precision = overlap / cand_total if cand_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricScore(
        name="rouge2",
        value=f1,
        components={"precision": precision, "recall": recall, "f1": f1, "overlap": float(overlap)},
    )


def _greedy_align(
    candidate: Sequence[str],
    reference: Sequence[str],
    cand_open: list[bool],
    ref_open: list[bool],
    key: Callable[[str], str],
) -> list[tuple[int, int]]:
    """Leftmost-greedy one-to-one matching over the still-open tokens."""
    pairs: list[tuple[int, int]] = []
    for i, token in enumerate(candidate):
        if not cand_open[i]:
            continue
        wanted = key(token)
        for j, ref_token in enumerate(reference):
            if ref_open[j] and key(ref_token) == wanted:
                cand_open[i] = False
                ref_open[j] = False
                pairs.append((i, j))
                break
    return pairs


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    """Minimal contiguous aligned runs, pairs ordered by candidate index."""
    chunks = 0
    previous: tuple[int, int] | None = None
    for i, j in sorted(pairs):
        if previous is None or i != previous[0] + 1 or j != previous[1] + 1:
            chunks += 1
        previous = (i, j)
    return chunks


def meteor_lite(
    candidate: TokenSeq,
    reference: TokenSeq,
    stemmer: Callable[[str], str] = porter_stem,
) -> MetricScore:
    """Exact then stem alignment, harmonic Fmean weighted toward recall,
    cubic fragmentation penalty capped at half the score."""
    cand = list(candidate.tokens)
    ref = list(reference.tokens)
    cand_open = [True] * len(cand)
    ref_open = [True] * len(ref)
    pairs = _greedy_align(cand, ref, cand_open, ref_open, key=lambda t: t)
    pairs += _greedy_align(cand, ref, cand_open, ref_open, key=stemmer)

    m = len(pairs)
    if m == 0:
        return MetricScore(
            name="meteor_lite",
            value=0.0,
            components={"matches": 0.0, "precision": 0.0, "recall": 0.0, "fmean": 0.0,
                        "chunks": 0.0, "penalty": 0.0},
        )
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = precision * recall / (0.9 * precision + 0.1 * recall)
    chunks = _count_chunks(pairs)
    penalty = 0.5 * (chunks / m) ** 3
    return MetricScore(
        name="meteor_lite",
        value=fmean * (1 - penalty),
        components={
            "matches": float(m),
            "precision": precision,
            "recall": recall,
            "fmean": fmean,
            "chunks": float(chunks),
            "penalty": penalty,
        },
    )


def corpus_aggregate(per_item: Sequence[MetricScore]) -> dict[str, float]:
    """Mean per metric name, scaled to 0-100, rounded half-even to 2dp."""
    if not per_item:
        raise EmptyInputError("no metric scores to aggregate")
    grouped: dict[str, list[Decimal]] = {}
    for score in per_item:
        grouped.setdefault(score.name, []).append(Decimal(repr(score.value)))
    out: dict[str, float] = {}
    for name, values in grouped.items():
        mean = sum(values) / len(values)
        out[name] = float((mean * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))
    return out
