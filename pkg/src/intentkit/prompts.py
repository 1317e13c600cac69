"""Prompt construction for the four in-context-learning scenarios, and the
strict response parser that maps model output back into the closed label set.

Scenarios are cumulative: each one renders every section of the previous one
unchanged and appends new material, so prompt content only ever grows.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .errors import InvalidBank, MissingBank, OutOfVocabularyLabel
from .model import LABELS, IntentLabel, Query, parse_label

EXAMPLES_PER_LABEL = 5


class Scenario(str, Enum):
    DEFINITIONS_ONLY = "definitions_only"
    DEFINITIONS_KEYWORDS = "definitions_keywords"
    DEFINITIONS_KEYWORDS_FEWSHOT = "definitions_keywords_fewshot"
    CLUE_AND_REASONING = "clue_and_reasoning"

    @property
    def rank(self) -> int:
        return _SCENARIO_ORDER.index(self)

    @property
    def wants_examples(self) -> bool:
        return self.rank >= 2


_SCENARIO_ORDER = (
    Scenario.DEFINITIONS_ONLY,
    Scenario.DEFINITIONS_KEYWORDS,
    Scenario.DEFINITIONS_KEYWORDS_FEWSHOT,
    Scenario.CLUE_AND_REASONING,
)


@dataclass(frozen=True)
class FewShotExample:
    query: str
    label: IntentLabel
    clues: str = ""
    reasoning: str = ""


@dataclass(frozen=True)
class FewShotBank:
    """Exactly 5 examples per category."""

    examples: tuple[FewShotExample, ...]

    def __post_init__(self) -> None:
        for label in LABELS:
            n = sum(1 for ex in self.examples if ex.label is label)
            if n != EXAMPLES_PER_LABEL:
                raise InvalidBank(
                    f"need exactly {EXAMPLES_PER_LABEL} examples for {label.value}, got {n}"
                )

    def by_label(self, label: IntentLabel) -> tuple[FewShotExample, ...]:
        return tuple(ex for ex in self.examples if ex.label is label)

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "FewShotBank":
        examples = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                examples.append(
                    FewShotExample(
                        query=str(rec["query"]),
                        label=parse_label(rec["label"]),
                        clues=str(rec.get("clues", "")),
                        reasoning=str(rec.get("reasoning", "")),
                    )
                )
        return cls(examples=tuple(examples))


def _asset(name: str) -> str:
    return resources.files("intentkit").joinpath(f"data/prompts/{name}").read_text("utf-8")


@lru_cache(maxsize=1)
def default_definitions() -> str:
    return _asset("definitions.txt").strip()


@lru_cache(maxsize=1)
def default_prompt_keywords() -> dict[str, list[str]]:
    return json.loads(_asset("keywords.json"))


@lru_cache(maxsize=1)
def default_bank() -> FewShotBank:
    with resources.as_file(resources.files("intentkit").joinpath("data/prompts/fewshot.jsonl")) as p:
        return FewShotBank.load_jsonl(p)


def _keywords_block(keywords: Mapping[str, Sequence[str]]) -> str:
    lines = ["### Intent keywords"]
    for label in LABELS:
        words = keywords.get(label.value, ())
        lines.append(f"{label.value.capitalize()}: {', '.join(words)}")
    return "\n".join(lines)


def _examples_block(bank: FewShotBank) -> str:
    lines = ["### Labeled examples"]
    for label in LABELS:
        for ex in bank.by_label(label):
            lines.append(f"Query: {ex.query}")
            lines.append(f"Intent: {ex.label.value}")
            lines.append("")
    return "\n".join(lines).rstrip()


def _worked_examples_block(bank: FewShotBank) -> str:
    lines = ["### Worked examples", _asset("reasoning_instructions.txt").strip(), ""]
    for label in LABELS:
        for ex in bank.by_label(label):
            if not ex.clues or not ex.reasoning:
                raise InvalidBank(
                    f"example {ex.query!r} lacks clue/reasoning text required for "
                    "clue-and-reasoning prompting"
                )
            lines.append(f"Query: {ex.query}")
            lines.append(f"Clues: {ex.clues}")
            lines.append(f"Reasoning: {ex.reasoning}")
            lines.append(f"Decision: {ex.label.value}")
            lines.append("")
    return "\n".join(lines).rstrip()


def sections(
    scenario: Scenario,
    query: Query,
    bank: FewShotBank | None = None,
    definitions: str | None = None,
    keywords: Mapping[str, Sequence[str]] | None = None,
) -> list[str]:
    """Ordered section strings whose concatenation is the prompt.

    Exposed separately so the cumulative-content invariant is testable
    section by section.
    """
    defs = definitions if definitions is not None else default_definitions()
    kws = keywords if keywords is not None else default_prompt_keywords()
    out = [
        _asset("header.txt").strip(),
        "### Intent definitions\n" + defs,
    ]
    if scenario.rank >= 1:
        out.append(_keywords_block(kws))
    if scenario.wants_examples:
        if bank is None:
            raise MissingBank(f"scenario {scenario.value} requires a few-shot bank")
        out.append(_examples_block(bank))
    if scenario is Scenario.CLUE_AND_REASONING:
        assert bank is not None
        out.append(_worked_examples_block(bank))
    out.append(_asset("task.txt").strip().format(query=query.text))
    return out


def render(
    scenario: Scenario,
    query: Query,
    bank: FewShotBank | None = None,
    definitions: str | None = None,
    keywords: Mapping[str, Sequence[str]] | None = None,
) -> str:
    """Deterministically render the prompt for one query."""
    return "\n\n".join(
        sections(scenario, query, bank=bank, definitions=definitions, keywords=keywords)
    )


_LABEL_WORD = re.compile(r"\b(informational|navigational|transactional)\b", re.IGNORECASE)
_STRIP_CHARS = " \t\r\n.,;:!?\"'()[]`*"


def parse_response(raw: str) -> IntentLabel:
    """Map model output to a label.

    Order: exact single-word answer first, then the last occurrence of any
    label word (clue-and-reasoning transcripts end with the decision).
    Anything else raises OutOfVocabularyLabel.
    """
    compact = raw.strip(_STRIP_CHARS).lower()
    for label in LABELS:
        if compact == label.value:
            return label
    matches = _LABEL_WORD.findall(raw)
    if matches:
        return IntentLabel(matches[-1].lower())
    raise OutOfVocabularyLabel(raw)
