"""Lexical and embedding-space evaluation metrics."""

from .embedding import (
    DimensionDriftError,
    DimensionMismatchError,
    EmptyMatrixError,
    ZeroVectorError,
    cosine,
    embed_texts,
    greedy_match_f1,
)
from .lexical import (
    EmptyInputError,
    LengthMismatchError,
    MetricScore,
    bleu4,
    corpus_aggregate,
    meteor_lite,
    rouge2,
)
from .porter import porter_stem
from .tokens import TokenSeq, tokenize

__all__ = [
    "DimensionDriftError",
    "DimensionMismatchError",
    "EmptyInputError",
    "EmptyMatrixError",
    "LengthMismatchError",
    "MetricScore",
    "TokenSeq",
    "ZeroVectorError",
    "bleu4",
    "corpus_aggregate",
    "cosine",
    "embed_texts",
    "greedy_match_f1",
    "meteor_lite",
    "porter_stem",
    "rouge2",
    "tokenize",
]
