"""Prompt template registry and renderer.

Template bodies live as package data in templates/ and are treated as
frozen artifacts: the renderer substitutes named placeholders and must
not touch a single other byte. Placeholders are {lower_snake} spans;
literal braces in the bodies (the stage-2 format example, the judge
JSON block) do not match the placeholder pattern and pass through.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Mapping

_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class TemplateName(str, Enum):
    STAGE1_CAPTION = "Stage1Caption"
    STAGE2_SPECIES = "Stage2Species"
    STAGE2_DISEASE = "Stage2Disease"
    STAGE3_QA = "Stage3QA"
    JUDGE_RUBRIC = "JudgeRubric"


_TEMPLATE_FILES = {
    TemplateName.STAGE1_CAPTION: "stage1_caption.txt",
    TemplateName.STAGE2_SPECIES: "stage2_species.txt",
    TemplateName.STAGE2_DISEASE: "stage2_disease.txt",
    TemplateName.STAGE3_QA: "stage3_qa.txt",
    TemplateName.JUDGE_RUBRIC: "judge_rubric.txt",
}


class MissingBindingError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class UnknownPlaceholderError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    body: str
    placeholders: frozenset[str]


def _load_body(filename: str) -> str:
    return (resources.files("agrisynth") / "templates" / filename).read_text(encoding="utf-8")


def _build_registry() -> dict[TemplateName, PromptTemplate]:
    registry = {}
    for name, filename in _TEMPLATE_FILES.items():
        body = _load_body(filename)
        placeholders = frozenset(_PLACEHOLDER_RE.findall(body))
        registry[name] = PromptTemplate(name=name, body=body, placeholders=placeholders)
    return registry


_REGISTRY = _build_registry()


def get_template(name: TemplateName) -> PromptTemplate:
    return _REGISTRY[name]


def render_prompt(template: PromptTemplate | TemplateName, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder; reject under- and over-binding."""
    if isinstance(template, TemplateName):
        template = get_template(template)
    for name in template.placeholders:
        if name not in bindings:
            raise MissingBindingError(name)
    for name in bindings:
        if name not in template.placeholders:
            raise UnknownPlaceholderError(name)
    # function replacement: binding values are inserted verbatim, never
    # reinterpreted as regex escapes or as further placeholders
    return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), template.body)
