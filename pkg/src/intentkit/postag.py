"""Lexicon + suffix rule part-of-speech tagger for short queries.

Precedence is fixed and total:

1. closed-class lexicons, checked in order: question words, determiners,
   prepositions;
2. verb lexicon (base-form action verbs);
3. suffix rules, checked in order: numeric token -> Number, "-ly" -> Other,
   "-tion"/"-sion"/"-ness"/"-ment" -> Noun, "-ful"/"-ous"/"-ive"/"-less" ->
   Adjective;
4. fallback Noun.

Ambiguous tokens resolve to the first matching rule, so lexicon beats suffix
beats fallback. Tagging is pure and lexicons are immutable after load.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path


class PosTag(str, Enum):
    VERB = "verb"
    NOUN = "noun"
    ADJECTIVE = "adjective"
    QUESTION_WORD = "question_word"
    PREPOSITION = "preposition"
    DETERMINER = "determiner"
    NUMBER = "number"
    OTHER = "other"


_NUMERIC = re.compile(r"^\d+(?:[.,:/]\d+)*$")
_NOUN_SUFFIXES = ("tion", "sion", "ness", "ment")
_ADJ_SUFFIXES = ("ful", "ous", "ive", "less")


@dataclass(frozen=True)
class Lexicons:
    question_words: frozenset[str]
    determiners: frozenset[str]
    prepositions: frozenset[str]
    verbs: frozenset[str]


def _read_wordlist(text: str) -> frozenset[str]:
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.add(line)
    return frozenset(words)


def load_lexicons(directory: str | Path) -> Lexicons:
    """Load the four word lists from plain-text files (one token per line,
    '#' comments)."""
    directory = Path(directory)
    return Lexicons(
        question_words=_read_wordlist((directory / "question_words.txt").read_text("utf-8")),
        determiners=_read_wordlist((directory / "determiners.txt").read_text("utf-8")),
        prepositions=_read_wordlist((directory / "prepositions.txt").read_text("utf-8")),
        verbs=_read_wordlist((directory / "verbs.txt").read_text("utf-8")),
    )


@lru_cache(maxsize=1)
def default_lexicons() -> Lexicons:
    root = resources.files("intentkit").joinpath("data/lexicons")
    return Lexicons(
        question_words=_read_wordlist(root.joinpath("question_words.txt").read_text("utf-8")),
        determiners=_read_wordlist(root.joinpath("determiners.txt").read_text("utf-8")),
        prepositions=_read_wordlist(root.joinpath("prepositions.txt").read_text("utf-8")),
        verbs=_read_wordlist(root.joinpath("verbs.txt").read_text("utf-8")),
    )


def tag_token(token: str, lexicons: Lexicons) -> PosTag:
    if token in lexicons.question_words:
        return PosTag.QUESTION_WORD
    if token in lexicons.determiners:
        return PosTag.DETERMINER
    if token in lexicons.prepositions:
        return PosTag.PREPOSITION
    if token in lexicons.verbs:
        return PosTag.VERB
    if _NUMERIC.match(token):
        return PosTag.NUMBER
    if token.endswith("ly"):
        return PosTag.OTHER
    if token.endswith(_NOUN_SUFFIXES):
        return PosTag.NOUN
    if token.endswith(_ADJ_SUFFIXES):
        return PosTag.ADJECTIVE
    return PosTag.NOUN


def tag(text: str, lexicons: Lexicons | None = None) -> list[tuple[str, PosTag]]:
    """Tag normalized query text; total on whitespace-split tokens."""
    lex = lexicons if lexicons is not None else default_lexicons()
    return [(tok, tag_token(tok, lex)) for tok in text.split()]
