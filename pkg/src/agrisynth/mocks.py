"""Deterministic stand-ins for the chat and embedding endpoints.

The mock chat client recognizes each pipeline prompt by its opening
line and fabricates a response that satisfies the stage's validation
rules, derived purely from the prompt text and a seed. That keeps the
whole pipeline runnable with zero network and makes interrupted/resumed
runs byte-comparable.

A fixture directory can override individual responses: files are named
by the request fingerprint (sha256 of the canonical request JSON,
first 24 hex chars) and contain {"content": "..."}.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Sequence

from .jsonio import canonical_json, extract_json, sha256_hex
from .rng import Xorshift64Star, derive_seed

_STAGE1_EXTRA_RE = re.compile(r"the image contains (.*)\.\nInclude these aspects")
_COUNT_MARKER_RE = re.compile(r"contains exactly (\d+)")

_DESC_POOL = (
    "leaf lamina margins are entire and glabrous with prominent venation".split()
    + "the stem is erect branching basally and bears alternate foliage".split()
    + "inflorescences appear terminal with actinomorphic flowers and persistent bracts".split()
    + "fruit development proceeds from fertilized ovaries into characteristic forms".split()
    + "cultivation favors well drained loam moderate irrigation and full sun".split()
    + "native distribution spans temperate and subtropical growing regions worldwide".split()
)

_QA_SLOTS = (
    ("Identification", "What plant is shown in the image?",
     "The image shows a cultivated specimen consistent with the provided class information."),
    ("Visual Reasoning", "What visual features allow this plant to be identified?",
     "Identification rests on the visible leaf shape, growth habit, and overall plant architecture described in the caption."),
    ("Condition & Health", "What is the visible condition of the plant's foliage?",
     "The foliage appears uniform in color without visible lesions, consistent with the described health indicators."),
    ("Cultivation Knowledge", "What growing conditions does this plant require?",
     "According to the reference knowledge, it performs best in well-drained soil with moderate irrigation and full sun."),
)


def request_fingerprint(messages: list[dict], model: str) -> str:
    return sha256_hex(canonical_json({"messages": messages, "model": model}))[:24]


class MockChatClient:
    """Prompt-aware deterministic chat endpoint."""

    def __init__(self, seed: int = 0, fixture_dir: Path | str | None = None):
        self.seed = seed
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self._desc_cache: dict[str, str] = {}
        self.calls = 0

    def complete(
        self, messages: list[dict], *, model: str, temperature: float, max_tokens: int
    ) -> str:
        self.calls += 1
        if self.fixture_dir is not None:
            path = self.fixture_dir / f"{request_fingerprint(messages, model)}.json"
            if path.exists():
                return json.loads(path.read_text(encoding="utf-8"))["content"]
        prompt = messages[-1]["content"]
        if prompt.startswith("Write a descriptive caption"):
            return self._caption(prompt)
        if prompt.startswith("For the class name") or prompt.startswith("For each class name in"):
            return self._knowledge(prompt)
        if prompt.startswith("You are an expert agricultural AI trainer"):
            return self._qa(prompt)
        if prompt.startswith("You are an expert evaluator"):
            return self._judgement(prompt)
        raise ValueError(f"mock cannot answer prompt starting {prompt[:60]!r}")

    def _caption(self, prompt: str) -> str:
        match = _STAGE1_EXTRA_RE.search(prompt)
        extra = match.group(1) if match else "an unidentified plant"
        return (
            f"The image contains {extra}. "
            "The planting is viewed from a top-down perspective under field conditions. "
            "Plants are at the vegetative stage with dense, even ground cover. "
            "Foliage color is uniform with no visible damage."
        )

    def _description(self, name: str) -> str:
        cached = self._desc_cache.get(name)
        if cached is not None:
            return cached
        rng = Xorshift64Star(derive_seed(self.seed, f"desc:{name}"))
        pool = _DESC_POOL
        words = [pool[rng.below(len(pool))] for _ in range(165)]
        text = f"{name} is a cultivated taxon of agronomic interest. " + " ".join(words) + "."
        self._desc_cache[name] = text
        return text

    def _knowledge(self, prompt: str) -> str:
        names = extract_json(prompt)
        if not isinstance(names, list):
            raise ValueError("expected a class-name array in the stage-2 prompt")
        return json.dumps({name: self._description(name) for name in names})

    def _qa(self, prompt: str) -> str:
        items = [
            {"question": q, "answer": a, "category": cat} for cat, q, a in _QA_SLOTS
        ]
        count_match = _COUNT_MARKER_RE.search(prompt)
        if count_match:
            n = count_match.group(1)
            items.append(
                {
                    "question": "How many countable plant instances are visible in the image?",
                    "answer": f"There are exactly {n} countable instances visible in the image.",
                    "category": "Anatomy/Detail",
                }
            )
        else:
            items.append(
                {
                    "question": "Which specific plant structure is most prominent in the image?",
                    "answer": "The most prominent visible structure is the leaf arrangement along the upper canopy.",
                    "category": "Anatomy/Detail",
                }
            )
        return json.dumps(items)

    def _judgement(self, prompt: str) -> str:
        score = 1 + Xorshift64Star(derive_seed(self.seed, f"judge:{prompt}")).below(4)
        return json.dumps(
            {"score": score, "justification": "Deterministic mock assessment of the output."}
        )


class MockEmbeddingClient:
    """Hash-derived unit-norm-ish vectors with a constant dimension."""

    def __init__(self, dim: int = 8):
        self.dim = dim
        self.requests = 0

    def embed_batch(self, texts: Sequence[str], *, model: str) -> list[list[float]]:
        self.requests += 1
        out = []
        for text in texts:
            rng = Xorshift64Star(derive_seed(0, f"embed:{model}:{text}"))
            vec = [rng.uniform(-1.0, 1.0) for _ in range(self.dim)]
            out.append(vec)
        return out
