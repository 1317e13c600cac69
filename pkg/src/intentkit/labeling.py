"""Weak-supervision labeling engine.

A FunctionSet is an ordered collection of labeling functions; each emits one
vote (its target label or abstain) per query, and majority voting over the
non-abstain votes picks the final label. Ties resolve by the fixed priority
navigational > transactional > informational, never by function order.
"""

from __future__ import annotations

import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator

import yaml

from .errors import ConfigError, EmptyQuery, QueryTooLong
from .model import (
    LABELS,
    TIE_BREAK_PRIORITY,
    IntentLabel,
    LabelVote,
    Query,
    WeakLabel,
    parse_label,
)
from .postag import Lexicons, PosTag, default_lexicons, tag

log = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = 0.34


class LfKind(str, Enum):
    KEYWORD_SET = "keyword_set"
    PATTERN = "pattern"
    POS_RULE = "pos_rule"
    LENGTH_HEURISTIC = "length_heuristic"


@dataclass(frozen=True)
class LabelingFunction:
    """One vote source. Parameters are kind-specific; unused ones stay empty."""

    name: str
    kind: LfKind
    target: IntentLabel
    keywords: tuple[str, ...] = ()
    pattern: str = ""
    predicate: str = ""
    min_tokens: int = 0
    guard_keywords: tuple[str, ...] = ()
    guard_pattern: str = ""

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "kind": self.kind.value,
            "target": self.target.value,
        }
        if self.kind is LfKind.KEYWORD_SET:
            out["keywords"] = list(self.keywords)
        elif self.kind is LfKind.PATTERN:
            out["pattern"] = self.pattern
        elif self.kind is LfKind.POS_RULE:
            out["predicate"] = self.predicate
        elif self.kind is LfKind.LENGTH_HEURISTIC:
            out["min_tokens"] = self.min_tokens
            if self.guard_keywords:
                out["guard_keywords"] = list(self.guard_keywords)
            if self.guard_pattern:
                out["guard_pattern"] = self.guard_pattern
        return out

    @classmethod
    def from_dict(cls, rec: dict[str, Any]) -> "LabelingFunction":
        try:
            kind = LfKind(rec["kind"])
            target = parse_label(rec["target"])
            return cls(
                name=str(rec["name"]),
                kind=kind,
                target=target,
                keywords=tuple(rec.get("keywords", ())),
                pattern=str(rec.get("pattern", "")),
                predicate=str(rec.get("predicate", "")),
                min_tokens=int(rec.get("min_tokens", 0)),
                guard_keywords=tuple(rec.get("guard_keywords", ())),
                guard_pattern=str(rec.get("guard_pattern", "")),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad labeling function record {rec!r}: {exc}") from exc


class _KeywordMatcher:
    """Token-boundary matching; multi-word keywords match contiguous runs."""

    def __init__(self, keywords: Iterable[str]):
        singles: set[str] = set()
        multis: list[tuple[str, ...]] = []
        for kw in keywords:
            parts = tuple(kw.split())
            if len(parts) == 1:
                singles.add(parts[0])
            elif parts:
                multis.append(parts)
        self._singles = frozenset(singles)
        self._multis = tuple(multis)

    def matches(self, tokens: tuple[str, ...]) -> bool:
        if self._singles and not self._singles.isdisjoint(tokens):
            return True
        for parts in self._multis:
            width = len(parts)
            for i in range(len(tokens) - width + 1):
                if tokens[i : i + width] == parts:
                    return True
        return False


_POS_PREDICATES = {
    "leading_verb": lambda tags: bool(tags) and tags[0][1] is PosTag.VERB,
}


class _CompiledLf:
    def __init__(self, lf: LabelingFunction):
        self.lf = lf
        if lf.kind is LfKind.KEYWORD_SET:
            if not lf.keywords:
                raise ConfigError(f"{lf.name}: keyword_set needs keywords")
            self._keywords = _KeywordMatcher(lf.keywords)
        elif lf.kind is LfKind.PATTERN:
            if not lf.pattern:
                raise ConfigError(f"{lf.name}: pattern function needs a pattern")
            try:
                self._regex = re.compile(lf.pattern)
            except re.error as exc:
                raise ConfigError(f"{lf.name}: bad pattern: {exc}") from exc
        elif lf.kind is LfKind.POS_RULE:
            if lf.predicate not in _POS_PREDICATES:
                raise ConfigError(
                    f"{lf.name}: unknown predicate {lf.predicate!r}; "
                    f"known: {sorted(_POS_PREDICATES)}"
                )
            self._predicate = _POS_PREDICATES[lf.predicate]
        elif lf.kind is LfKind.LENGTH_HEURISTIC:
            if lf.min_tokens < 1:
                raise ConfigError(f"{lf.name}: length_heuristic needs min_tokens >= 1")
            self._guard_keywords = _KeywordMatcher(lf.guard_keywords) if lf.guard_keywords else None
            self._guard_regex = re.compile(lf.guard_pattern) if lf.guard_pattern else None

    def vote(self, query: Query, tags: list[tuple[str, PosTag]]) -> LabelVote:
        lf = self.lf
        fired = False
        if lf.kind is LfKind.KEYWORD_SET:
            fired = self._keywords.matches(query.tokens)
        elif lf.kind is LfKind.PATTERN:
            fired = self._regex.search(query.text) is not None
        elif lf.kind is LfKind.POS_RULE:
            fired = self._predicate(tags)
        elif lf.kind is LfKind.LENGTH_HEURISTIC:
            tokens = query.tokens
            fired = len(tokens) >= lf.min_tokens
            if fired and self._guard_keywords is not None and self._guard_keywords.matches(tokens):
                fired = False
            if fired and self._guard_regex is not None and self._guard_regex.search(query.text):
                fired = False
        return LabelVote(source_lf=lf.name, label=lf.target if fired else None)


@dataclass(frozen=True)
class FunctionSet:
    """Immutable, ordered set of labeling functions with unique names."""

    name: str
    functions: tuple[LabelingFunction, ...]
    default_confidence: float = DEFAULT_CONFIDENCE

    def __post_init__(self) -> None:
        names = [lf.name for lf in self.functions]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"duplicate labeling function names: {dupes}")
        if not (0.0 < self.default_confidence <= 1.0):
            raise ConfigError(f"default_confidence {self.default_confidence} outside (0, 1]")
        object.__setattr__(self, "_compiled", tuple(_CompiledLf(lf) for lf in self.functions))

    @property
    def compiled(self) -> tuple[_CompiledLf, ...]:
        return self._compiled  # type: ignore[attr-defined]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "default_confidence": self.default_confidence,
            "functions": [lf.to_dict() for lf in self.functions],
        }

    @classmethod
    def from_dict(cls, rec: dict[str, Any]) -> "FunctionSet":
        try:
            functions = tuple(LabelingFunction.from_dict(f) for f in rec["functions"])
            return cls(
                name=str(rec.get("name", "unnamed")),
                functions=functions,
                default_confidence=float(rec.get("default_confidence", DEFAULT_CONFIDENCE)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad function set config: {exc}") from exc

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False, allow_unicode=True)

    @classmethod
    def load(cls, path: str | Path) -> "FunctionSet":
        with open(path, "r", encoding="utf-8") as fh:
            rec = yaml.safe_load(fh)
        if not isinstance(rec, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(rec)


@lru_cache(maxsize=1)
def builtin_function_set() -> FunctionSet:
    """The shipped default set, loaded from the packaged config file."""
    text = resources.files("intentkit").joinpath("data/functions/default.yaml").read_text("utf-8")
    rec = yaml.safe_load(text)
    return FunctionSet.from_dict(rec)


def apply(lf: LabelingFunction, query: Query, tags: list[tuple[str, PosTag]]) -> LabelVote:
    """Apply one labeling function; deterministic, total."""
    return _CompiledLf(lf).vote(query, tags)


def label(
    query: Query,
    fs: FunctionSet,
    lexicons: Lexicons | None = None,
    tags: list[tuple[str, PosTag]] | None = None,
) -> WeakLabel:
    """Majority-vote a query through every function in the set."""
    if tags is None:
        tags = tag(query.text, lexicons)
    votes = tuple(c.vote(query, tags) for c in fs.compiled)
    counts: dict[IntentLabel, int] = {}
    for vote in votes:
        if vote.label is not None:
            counts[vote.label] = counts.get(vote.label, 0) + 1
    if not counts:
        return WeakLabel(
            label=IntentLabel.INFORMATIONAL,
            confidence=fs.default_confidence,
            votes=votes,
            defaulted=True,
        )
    total = sum(counts.values())
    best = max(counts.values())
    leaders = [lab for lab in LABELS if counts.get(lab, 0) == best]
    tie_broken = len(leaders) > 1
    winner = next(lab for lab in TIE_BREAK_PRIORITY if lab in leaders)
    return WeakLabel(
        label=winner,
        confidence=best / total,
        votes=votes,
        tie_broken=tie_broken,
    )


def weak_label_record(query: Query, wl: WeakLabel) -> dict[str, Any]:
    """JSONL record for one weak label; extra keys document the vote trail."""
    rec: dict[str, Any] = {
        "id": query.query_id,
        "query": query.text,
        "label": wl.label.value,
        "confidence": round(wl.confidence, 6),
        "provenance": "weak",
        "defaulted": wl.defaulted,
        "votes": wl.vote_map(),
    }
    if wl.tie_broken:
        rec["tie_broken"] = True
    return rec


@dataclass
class CorpusReport:
    """Outcome of one corpus labeling run."""

    total_in: int = 0
    labeled: int = 0
    errors: int = 0
    seconds: float = 0.0
    workers: int = 1

    @property
    def queries_per_second(self) -> float:
        return self.labeled / self.seconds if self.seconds > 0 else float("inf")

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_in": self.total_in,
            "labeled": self.labeled,
            "errors": self.errors,
            "seconds": round(self.seconds, 6),
            "workers": self.workers,
            "queries_per_second": round(self.queries_per_second, 1),
        }


def label_corpus(
    inputs: Iterable[tuple[str | None, str]],
    fs: FunctionSet,
    workers: int = 1,
    lexicons: Lexicons | None = None,
    chunk_size: int = 2048,
) -> tuple[Iterator[dict[str, Any]], CorpusReport]:
    """Label a stream of (id, raw_text) pairs.

    Output records preserve input order and are identical for any worker
    count. Malformed inputs are logged and counted, never fatal. The report
    is populated once the returned iterator is exhausted.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    lex = lexicons if lexicons is not None else default_lexicons()
    report = CorpusReport(workers=workers)

    def process(item: tuple[str | None, str]) -> dict[str, Any] | None:
        qid, raw = item
        try:
            query = Query.from_raw(raw, id=qid)
        except (EmptyQuery, QueryTooLong) as exc:
            log.warning("skipping record %r: %s", raw[:80], exc)
            return None
        return weak_label_record(query, label(query, fs, lexicons=lex))

    def chunks(stream: Iterable[tuple[str | None, str]]) -> Iterator[list[tuple[str | None, str]]]:
        buf: list[tuple[str | None, str]] = []
        for item in stream:
            buf.append(item)
            if len(buf) >= chunk_size:
                yield buf
                buf = []
        if buf:
            yield buf

    def run() -> Iterator[dict[str, Any]]:
        start = time.perf_counter()
        if workers == 1:
            for item in inputs:
                report.total_in += 1
                rec = process(item)
                if rec is None:
                    report.errors += 1
                    continue
                report.labeled += 1
                yield rec
        else:
            # Chunked so the input stream is never fully materialized;
            # pool.map keeps each chunk's output in input order.
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for chunk in chunks(inputs):
                    report.total_in += len(chunk)
                    for rec in pool.map(process, chunk):
                        if rec is None:
                            report.errors += 1
                            continue
                        report.labeled += 1
                        yield rec
        report.seconds = time.perf_counter() - start

    return run(), report
