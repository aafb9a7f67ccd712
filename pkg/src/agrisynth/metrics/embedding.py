"""Embedding-space similarity kernels and the batched embedding fetch.

greedy_match_f1 mirrors the token-level greedy matching used by
BERTScore-style metrics: precision averages row maxima, recall averages
column maxima. Similarities may be negative, so the final F1 is clamped
into [0,1]; raw values stay visible in the components map.
"""

from __future__ import annotations

import math
from typing import Sequence

from .lexical import MetricScore

from ..endpoints import EmbeddingClient


class EmptyMatrixError(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class DimensionDriftError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


def greedy_match_f1(sim: Sequence[Sequence[float]]) -> MetricScore:
    if not sim or not sim[0]:
        raise EmptyMatrixError("similarity matrix must be non-empty")
    width = len(sim[0])
    for row in sim:
        if len(row) != width:
            raise EmptyMatrixError("similarity matrix must be rectangular")
        for x in row:
            if not math.isfinite(x):
                raise EmptyMatrixError(f"non-finite similarity {x!r}")

    precision = sum(max(row) for row in sim) / len(sim)
    recall = sum(max(row[j] for row in sim) for j in range(width)) / width
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricScore(
        name="greedy_match_f1",
        value=min(max(f1, 0.0), 1.0),
        components={"precision": precision, "recall": recall, "f1": f1},
    )


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v) or not u:
        raise DimensionMismatchError(f"dimensions {len(u)} and {len(v)} do not match")
    dot = math.fsum(x * y for x, y in zip(u, v))
    norm_u = math.sqrt(math.fsum(x * x for x in u))
    norm_v = math.sqrt(math.fsum(y * y for y in v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return min(max(dot / (norm_u * norm_v), -1.0), 1.0)


def embed_texts(texts: Sequence[str], client: EmbeddingClient, cfg) -> list[list[float]]:
    """Fetch one vector per text in ceil(len/batch_size) batched requests."""
    if not texts:
        raise EmptyInputError("no texts to embed")
    batch_size = cfg.embedding.batch_size
    model = cfg.models.embed
    vectors: list[list[float]] = []
    for start in range(0, len(texts), batch_size):
        vectors.extend(client.embed_batch(texts[start : start + batch_size], model=model))
    if len(vectors) != len(texts):
        raise DimensionDriftError(
            f"endpoint returned {len(vectors)} vectors for {len(texts)} texts"
        )
    dim = len(vectors[0])
    for i, vector in enumerate(vectors):
        if len(vector) != dim:
            raise DimensionDriftError(
                f"vector {i} has dimension {len(vector)}, expected {dim}"
            )
    return vectors
