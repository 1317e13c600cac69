"""Dataset curation: stratified reservoir sampling, token truncation,
train/validation splits, and high-confidence augmentation.

Every operation is seed-deterministic: the same (input order, seed) pair
reproduces byte-identical output. Per-class randomness uses seeds derived by
hashing, so classes are sampled independently in a single pass.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol

from .errors import DataFormatError, InsufficientClass, OverlapDetected
from .model import LABELS, IntentLabel, Query, content_hash, parse_label

MAX_QUERY_TOKENS = 32


def derive_seed(seed: int, *parts: str) -> int:
    """Stable 64-bit sub-seed; avoids Python's salted str hash."""
    digest = hashlib.sha256(f"{seed}:{':'.join(parts)}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def record_id(rec: dict[str, Any]) -> str:
    rid = rec.get("id")
    if rid is not None:
        return str(rid)
    if "query" not in rec:
        raise DataFormatError(f"record has neither id nor query: {rec!r}")
    return content_hash(str(rec["query"]))


def record_label(rec: dict[str, Any]) -> IntentLabel:
    if "label" not in rec or rec["label"] is None:
        raise DataFormatError(f"record missing label: {rec!r}")
    return parse_label(str(rec["label"]))


class _Reservoir:
    """Algorithm R over one class stream."""

    def __init__(self, capacity: int, seed: int):
        self.capacity = capacity
        self.rng = random.Random(seed)
        self.seen = 0
        self.items: list[dict[str, Any]] = []

    def offer(self, rec: dict[str, Any]) -> None:
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append(rec)
            return
        j = self.rng.randrange(self.seen)
        if j < self.capacity:
            self.items[j] = rec


@dataclass
class StratifiedSample:
    """Equal per-class record lists drawn from a labeled corpus."""

    per_class: dict[IntentLabel, list[dict[str, Any]]]
    seed: int
    source: str = ""

    @property
    def n_per_class(self) -> int:
        return len(next(iter(self.per_class.values()))) if self.per_class else 0

    def records(self) -> list[dict[str, Any]]:
        out: list[dict[str, Any]] = []
        for label in LABELS:
            out.extend(self.per_class.get(label, []))
        return out

    def ids(self) -> set[str]:
        return {record_id(r) for r in self.records()}


def stratified_sample(
    corpus: Iterable[dict[str, Any]],
    n_per_class: int,
    seed: int,
    source: str = "",
) -> StratifiedSample:
    """Single-pass per-class reservoir sample of `n_per_class` each."""
    reservoirs = {
        label: _Reservoir(n_per_class, derive_seed(seed, "sample", label.value))
        for label in LABELS
    }
    for rec in corpus:
        reservoirs[record_label(rec)].offer(rec)
    for label in LABELS:
        if reservoirs[label].seen < n_per_class:
            raise InsufficientClass(label, reservoirs[label].seen, n_per_class)
    return StratifiedSample(
        per_class={label: reservoirs[label].items for label in LABELS},
        seed=seed,
        source=source,
    )


class Tokenizer(Protocol):
    def tokenize(self, text: str) -> list[str]: ...

    def detokenize(self, tokens: list[str]) -> str: ...


class WhitespaceTokenizer:
    """Default tokenizer; model-true tokenizers are injected by callers."""

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: list[str]) -> str:
        return " ".join(tokens)


@dataclass(frozen=True)
class TruncationResult:
    query: Query
    truncated: bool


def truncate_tokens(
    q: Query,
    max_tokens: int = MAX_QUERY_TOKENS,
    tokenizer: Tokenizer | None = None,
) -> TruncationResult:
    """Keep the first `max_tokens` tokens; idempotent; id is preserved."""
    tok = tokenizer if tokenizer is not None else WhitespaceTokenizer()
    tokens = tok.tokenize(q.text)
    if len(tokens) <= max_tokens:
        return TruncationResult(query=q, truncated=False)
    text = tok.detokenize(tokens[:max_tokens])
    return TruncationResult(query=Query.from_raw(text, id=q.query_id), truncated=True)


def split_train_val(
    sample: StratifiedSample,
    ratio: float = 0.8,
    seed: int = 0,
) -> tuple[list[dict[str, Any]], list[dict[str, Any]]]:
    """Per-class stratified split; disjoint; union equals the input."""
    if not (0.0 < ratio < 1.0):
        raise DataFormatError(f"split ratio {ratio} outside (0, 1)")
    train: list[dict[str, Any]] = []
    val: list[dict[str, Any]] = []
    for label in LABELS:
        records = list(sample.per_class.get(label, []))
        rng = random.Random(derive_seed(seed, "split", label.value))
        rng.shuffle(records)
        n_train = int(len(records) * ratio)
        train.extend(records[:n_train])
        val.extend(records[n_train:])
    return train, val


def select_high_confidence(
    preds: Iterable[dict[str, Any]],
    threshold: float,
    n_per_class: int,
    seed: int,
    exclude: set[str] | None = None,
) -> dict[IntentLabel, list[dict[str, Any]]]:
    """Seeded per-class reservoir over predictions with confidence >=
    threshold (boundary included) whose ids are not excluded."""
    exclude = exclude or set()
    reservoirs = {
        label: _Reservoir(n_per_class, derive_seed(seed, "hc", label.value))
        for label in LABELS
    }
    for rec in preds:
        conf = rec.get("confidence")
        if conf is None or float(conf) < threshold:
            continue
        if record_id(rec) in exclude:
            continue
        reservoirs[record_label(rec)].offer(rec)
    for label in LABELS:
        if reservoirs[label].seen < n_per_class:
            raise InsufficientClass(label, reservoirs[label].seen, n_per_class)
    return {label: reservoirs[label].items for label in LABELS}


@dataclass
class AugmentedSet:
    """Random sample plus high-confidence augmentation, overlap-free."""

    records: list[dict[str, Any]]
    random_ids: set[str]
    high_conf_ids: set[str]
    threshold: float
    seed: int
    per_class_counts: dict[str, int] = field(default_factory=dict)


def assemble_augmented(
    random_part: StratifiedSample,
    high_conf: dict[IntentLabel, list[dict[str, Any]]],
    threshold: float,
    seed: int,
) -> AugmentedSet:
    """Union the two parts, verify disjointness by id, shuffle with seed."""
    random_ids = random_part.ids()
    hc_records: list[dict[str, Any]] = []
    hc_ids: set[str] = set()
    for label in LABELS:
        for rec in high_conf.get(label, []):
            rid = record_id(rec)
            if rid in hc_ids:
                raise OverlapDetected(f"duplicate id within high-confidence part: {rid}")
            hc_ids.add(rid)
            hc_records.append(rec)
    shared = random_ids & hc_ids
    if shared:
        raise OverlapDetected(f"{len(shared)} ids appear in both parts, e.g. {sorted(shared)[:3]}")
    combined = random_part.records() + hc_records
    rng = random.Random(derive_seed(seed, "assemble"))
    rng.shuffle(combined)
    counts: dict[str, int] = {}
    for rec in combined:
        counts[record_label(rec).value] = counts.get(record_label(rec).value, 0) + 1
    return AugmentedSet(
        records=combined,
        random_ids=random_ids,
        high_conf_ids=hc_ids,
        threshold=threshold,
        seed=seed,
        per_class_counts=counts,
    )


def finetune_record(rec: dict[str, Any]) -> dict[str, Any]:
    """Minimal export consumed by the fine-tuning trainer."""
    return {"query": str(rec["query"]), "label": parse_label(str(rec["label"])).value}
