"""Dataset loading and the model-true tokenizer.

Input contract: JSONL records carrying at least {"query": str, "label": str}
(extra keys are ignored), the format exported by the curation pipeline.
Queries are truncated to MAX_QUERY_TOKENS tokens with this tokenizer, and the
affected fraction is reported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataFormatError

MAX_QUERY_TOKENS = 32

LABELS = ("informational", "navigational", "transactional")

PAD, UNK, SEP = "<pad>", "<unk>", "<sep>"
SPECIALS = (PAD, UNK, SEP)


@dataclass
class Example:
    query: str
    label_id: int
    truncated: bool = False


@dataclass
class Dataset:
    examples: list[Example]
    truncated_count: int = 0

    @property
    def truncated_fraction(self) -> float:
        return self.truncated_count / len(self.examples) if self.examples else 0.0

    def label_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(LABELS, 0)
        for ex in self.examples:
            counts[LABELS[ex.label_id]] += 1
        return counts


class WordTokenizer:
    """Whitespace word-level vocabulary with the three label verbalizations
    pinned as single tokens."""

    def __init__(self, vocab: list[str]):
        self.tokens = list(vocab)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        for special in SPECIALS + LABELS:
            if special not in self.index:
                raise DataFormatError(f"vocabulary missing required token {special!r}")
        self.pad_id = self.index[PAD]
        self.unk_id = self.index[UNK]
        self.sep_id = self.index[SEP]
        self.label_ids = tuple(self.index[label] for label in LABELS)

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, queries: list[str], max_vocab: int = 20000) -> "WordTokenizer":
        counts: dict[str, int] = {}
        for query in queries:
            for tok in query.split():
                counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        vocab = list(SPECIALS) + list(LABELS)
        for tok in ranked:
            if tok in vocab:
                continue
            if len(vocab) >= max_vocab:
                break
            vocab.append(tok)
        return cls(vocab)

    def encode_query(self, query: str, max_tokens: int = MAX_QUERY_TOKENS) -> tuple[list[int], bool]:
        words = query.split()
        truncated = len(words) > max_tokens
        ids = [self.index.get(w, self.unk_id) for w in words[:max_tokens]]
        return ids, truncated

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"tokens": self.tokens}, fh)

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh)["tokens"])


def load_dataset(path: str | Path, tokenizer: WordTokenizer | None = None) -> Dataset:
    """Read curation-export JSONL; label strings must be in the closed set."""
    examples: list[Example] = []
    truncated = 0
    label_index = {label: i for i, label in enumerate(LABELS)}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "query" not in rec or "label" not in rec:
                raise DataFormatError(f"{path}:{lineno}: record needs 'query' and 'label'")
            label = str(rec["label"]).strip().lower()
            if label not in label_index:
                raise DataFormatError(f"{path}:{lineno}: unknown label {rec['label']!r}")
            query = str(rec["query"])
            was_truncated = len(query.split()) > MAX_QUERY_TOKENS
            truncated += was_truncated
            examples.append(
                Example(query=query, label_id=label_index[label], truncated=was_truncated)
            )
    if not examples:
        raise DataFormatError(f"{path}: no records")
    return Dataset(examples=examples, truncated_count=truncated)


def load_queries(path: str | Path) -> list[dict]:
    """Inference input: JSONL with {"id"?, "query"} (labels optional)."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "query" not in rec:
                raise DataFormatError(f"{path}:{lineno}: record needs 'query'")
            records.append(rec)
    return records
