"""Model-graded answer quality: rubric prompting, verdict parsing, aggregation.

Each evaluation item is scored on a 1-4 scale by a grader model that must
reply in a strict JSON shape. Items whose replies never parse are excluded
from the mean rather than silently coerced.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Sequence

from .endpoints import ChatClient, EndpointError
from .jsonio import NoJsonFoundError, extract_json
from .prompts import TemplateName, render_prompt

SCORE_MIN = 1
SCORE_MAX = 4
# generous ceiling; a verdict object is tiny but justifications vary
MAX_TOKENS = 512


class EmptyFieldError(ValueError):
    def __init__(self, name: str):
        super().__init__(f"judge prompt field {name!r} is empty")
        self.name = name


class ScoreOutOfRangeError(ValueError):
    def __init__(self, value: object):
        super().__init__(f"score {value!r} is not an integer in [{SCORE_MIN}, {SCORE_MAX}]")
        self.value = value


class MissingJustificationError(ValueError):
    def __init__(self):
        super().__init__("verdict lacks a non-empty justification")


class EmptyInputError(ValueError):
    pass


class EvalSetError(ValueError):
    pass


@dataclass(frozen=True)
class EvalItem:
    """One graded example: a question, the reference answer, and a model answer."""

    id: str
    question: str
    reference: str
    prediction: str

    @classmethod
    def from_dict(cls, row: object) -> "EvalItem":
        if not isinstance(row, dict):
            raise EvalSetError(f"eval rows must be JSON objects, got {type(row).__name__}")
        fields = {}
        for key in ("id", "question", "reference", "prediction"):
            value = row.get(key)
            if not isinstance(value, str) or not value.strip():
                raise EvalSetError(f"eval row field {key!r} must be a non-blank string")
            fields[key] = value
        return cls(**fields)


@dataclass(frozen=True)
class JudgeVerdict:
    item_id: str
    score: int
    justification: str
    raw_response: str
    attempts: int

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "score": self.score,
            "justification": self.justification,
            "attempts": self.attempts,
        }


@dataclass
class JudgeReport:
    per_item: list[JudgeVerdict]
    failures: list[str]
    mean_score: float | None
    normalized_pct: float | None
    normalization: str
    model_id: str

    @property
    def failure_count(self) -> int:
        return len(self.failures)

    @property
    def no_valid_verdicts(self) -> bool:
        return not self.per_item

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "normalization": self.normalization,
            "mean_score": None if self.mean_score is None else round(self.mean_score, 4),
            "normalized_pct": self.normalized_pct,
            "failure_count": self.failure_count,
            "failures": list(self.failures),
            "no_valid_verdicts": self.no_valid_verdicts,
            "per_item": [verdict.to_dict() for verdict in self.per_item],
        }


def build_judge_prompt(question: str, ground_truth: str, model_output: str) -> str:
    bindings = {
        "question": question,
        "ground_truth": ground_truth,
        "model_output": model_output,
    }
    for name, value in bindings.items():
        if not value.strip():
            raise EmptyFieldError(name)
    return render_prompt(TemplateName.JUDGE_RUBRIC, bindings)


def parse_verdict(raw: str) -> tuple[int, str]:
    """Extract (score, justification) from a grader reply.

    The reply may wrap the JSON object in prose or markdown fences; the
    first balanced object wins. Booleans are not scores.
    """
    payload = extract_json(raw)
    score = payload.get("score") if isinstance(payload, dict) else None
    if isinstance(score, bool) or not isinstance(score, int):
        raise ScoreOutOfRangeError(score)
    if not SCORE_MIN <= score <= SCORE_MAX:
        raise ScoreOutOfRangeError(score)
    justification = payload.get("justification")
    if not isinstance(justification, str) or not justification.strip():
        raise MissingJustificationError()
    return score, justification


def normalize_scores(scores: Sequence[int], mode: str = "offset") -> float:
    """Map 1-4 scores onto 0-100.

    "offset" anchors the scale floor at zero: (mean - 1) / 3 * 100.
    "scale" divides by the ceiling instead: mean / 4 * 100.
    Rounded half-even to two decimals.
    """
    if not scores:
        raise EmptyInputError("no scores to normalize")
    for score in scores:
        if isinstance(score, bool) or not isinstance(score, int):
            raise ScoreOutOfRangeError(score)
        if not SCORE_MIN <= score <= SCORE_MAX:
            raise ScoreOutOfRangeError(score)
    mean = Fraction(sum(scores), len(scores))
    if mode == "offset":
        pct = (mean - SCORE_MIN) / (SCORE_MAX - SCORE_MIN) * 100
    elif mode == "scale":
        pct = mean / SCORE_MAX * 100
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    quantized = (Decimal(pct.numerator) / Decimal(pct.denominator)).quantize(
        Decimal("0.01"), rounding=ROUND_HALF_EVEN
    )
    return float(quantized)


def judge_run(eval_set: Sequence[EvalItem], client: ChatClient, cfg) -> JudgeReport:
    """Grade every item, retrying unparseable replies.

    Items that exhaust their attempts are excluded from the mean and listed
    in the report. Endpoint trouble is fatal only when no item at all could
    be graded; partial outages degrade to failure entries.
    """
    if not eval_set:
        raise EmptyInputError("eval set is empty")
    attempts_allowed = max(1, cfg.judge.max_retries)
    verdicts: list[JudgeVerdict] = []
    failures: list[str] = []
    last_endpoint_error: EndpointError | None = None
    for item in eval_set:
        prompt = build_judge_prompt(item.question, item.reference, item.prediction)
        messages = [{"role": "user", "content": prompt}]
        verdict: JudgeVerdict | None = None
        for attempt in range(attempts_allowed):
            try:
                raw = client.complete(
                    messages,
                    model=cfg.models.judge,
                    temperature=cfg.judge.temperature,
                    max_tokens=MAX_TOKENS,
                )
            except EndpointError as exc:
                last_endpoint_error = exc
                continue
            try:
                score, justification = parse_verdict(raw)
            except (NoJsonFoundError, ScoreOutOfRangeError, MissingJustificationError):
                continue
            verdict = JudgeVerdict(
                item_id=item.id,
                score=score,
                justification=justification,
                raw_response=raw,
                attempts=attempt + 1,
            )
            break
        if verdict is None:
            failures.append(item.id)
        else:
            verdicts.append(verdict)

    if not verdicts and last_endpoint_error is not None:
        raise last_endpoint_error

    mode = cfg.judge.normalization
    if verdicts:
        scores = [verdict.score for verdict in verdicts]
        mean_score: float | None = sum(scores) / len(scores)
        normalized: float | None = normalize_scores(scores, mode)
    else:
        mean_score = None
        normalized = None
    return JudgeReport(
        per_item=verdicts,
        failures=failures,
        mean_score=mean_score,
        normalized_pct=normalized,
        normalization=mode,
        model_id=cfg.models.judge,
    )
