"""Canonical data types shared by every pipeline stage.

All types are immutable value objects and safe to share across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .errors import DataFormatError, EmptyQuery, OutOfVocabularyLabel, QueryTooLong

MAX_QUERY_CHARS = 512


class IntentLabel(str, Enum):
    """Closed level-1 intent taxonomy."""

    INFORMATIONAL = "informational"
    NAVIGATIONAL = "navigational"
    TRANSACTIONAL = "transactional"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


LABELS: tuple[IntentLabel, ...] = (
    IntentLabel.INFORMATIONAL,
    IntentLabel.NAVIGATIONAL,
    IntentLabel.TRANSACTIONAL,
)

# Fixed tie-break priority: navigational and transactional signals are rarer
# and more precise than informational ones.
TIE_BREAK_PRIORITY: tuple[IntentLabel, ...] = (
    IntentLabel.NAVIGATIONAL,
    IntentLabel.TRANSACTIONAL,
    IntentLabel.INFORMATIONAL,
)


class Provenance(str, Enum):
    """Which pipeline produced a prediction."""

    WEAK = "weak"
    LLM_ICL = "llm-icl"
    LLM_FT = "llm-ft"
    HYBRID = "hybrid"
    GOLD = "gold"


def normalize(text: str) -> str:
    """Lowercase, collapse internal whitespace, trim. Idempotent.

    Raises EmptyQuery when nothing is left.
    """
    out = " ".join(text.lower().split())
    if not out:
        raise EmptyQuery("query is empty after normalization")
    return out


def parse_label(text: str) -> IntentLabel:
    """Case-insensitive exact match against the closed label set.

    Anything else raises OutOfVocabularyLabel; labels are never coerced.
    """
    key = text.strip().lower()
    for label in LABELS:
        if key == label.value:
            return label
    raise OutOfVocabularyLabel(text)


def parse_provenance(text: str) -> Provenance:
    key = text.strip().lower().replace("_", "-")
    for prov in Provenance:
        if key == prov.value:
            return prov
    raise OutOfVocabularyLabel(text)


def content_hash(normalized_text: str) -> str:
    """Stable id for queries that arrive without one."""
    return hashlib.sha256(normalized_text.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Query:
    """A normalized short search query with a stable id."""

    text: str
    id: str | None = None

    @classmethod
    def from_raw(cls, text: str, id: str | None = None) -> "Query":
        norm = normalize(text)
        if len(norm) > MAX_QUERY_CHARS:
            raise QueryTooLong(f"{len(norm)} chars exceeds {MAX_QUERY_CHARS}")
        return cls(text=norm, id=id)

    @property
    def query_id(self) -> str:
        return self.id if self.id is not None else content_hash(self.text)

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self.text.split())


@dataclass(frozen=True)
class LabelVote:
    """One labeling function's opinion: a target label or abstain."""

    source_lf: str
    label: IntentLabel | None = None  # None means abstain

    @property
    def is_abstain(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class Prediction:
    """A final level-1 classification of one query."""

    query_id: str
    label: IntentLabel
    confidence: float
    provenance: Provenance
    defaulted: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.confidence <= 1.0):
            raise DataFormatError(f"confidence {self.confidence} outside (0, 1]")
        if self.provenance is Provenance.GOLD and self.confidence != 1.0:
            raise DataFormatError(f"gold records carry confidence exactly 1, got {self.confidence}")


@dataclass(frozen=True)
class GoldRecord:
    """An expert-annotated query."""

    query: Query
    label: IntentLabel


@dataclass(frozen=True)
class WeakLabel:
    """Majority-vote outcome over a function set for one query."""

    label: IntentLabel
    confidence: float
    votes: tuple[LabelVote, ...] = field(default=())
    defaulted: bool = False
    tie_broken: bool = False

    def vote_map(self) -> dict[str, str]:
        return {v.source_lf: (v.label.value if v.label else "abstain") for v in self.votes}
