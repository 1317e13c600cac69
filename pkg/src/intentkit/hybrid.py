"""Hybrid combination: an LLM stage in front, weak supervision behind it to
filter or re-rank. Three concrete policies make the idea testable:

- filter_agree: keep the LLM label unless a confident weak-supervision stage
  disagrees;
- ws_override: any non-defaulted weak-supervision label wins;
- confidence_blend: argmax over blended per-label scores from both stages.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, InvalidPolicy
from .model import (
    LABELS,
    TIE_BREAK_PRIORITY,
    IntentLabel,
    Prediction,
    Provenance,
    WeakLabel,
)


class HybridMode(str, Enum):
    FILTER_AGREE = "filter_agree"
    WS_OVERRIDE = "ws_override"
    CONFIDENCE_BLEND = "confidence_blend"


@dataclass(frozen=True)
class HybridPolicy:
    mode: HybridMode
    ws_min_confidence: float = 0.9
    blend_weight: float = 0.5

    def __post_init__(self) -> None:
        if self.mode is HybridMode.FILTER_AGREE and not (0.0 <= self.ws_min_confidence <= 1.0):
            raise InvalidPolicy(f"ws_min_confidence {self.ws_min_confidence} outside [0, 1]")
        if self.mode is HybridMode.CONFIDENCE_BLEND and not (0.0 <= self.blend_weight <= 1.0):
            raise InvalidPolicy(f"blend_weight {self.blend_weight} outside [0, 1]")

    @classmethod
    def from_file(cls, path: str | Path) -> "HybridPolicy":
        with open(path, "r", encoding="utf-8") as fh:
            rec = yaml.safe_load(fh)
        if not isinstance(rec, dict) or "mode" not in rec:
            raise ConfigError(f"{path}: policy file needs a 'mode' key")
        try:
            mode = HybridMode(str(rec["mode"]))
        except ValueError as exc:
            raise InvalidPolicy(f"unknown hybrid mode {rec['mode']!r}") from exc
        return cls(
            mode=mode,
            ws_min_confidence=float(rec.get("ws_min_confidence", 0.9)),
            blend_weight=float(rec.get("blend_weight", 0.5)),
        )


def _vote_fractions(ws: WeakLabel) -> dict[IntentLabel, float]:
    counts: dict[IntentLabel, int] = {}
    for vote in ws.votes:
        if vote.label is not None:
            counts[vote.label] = counts.get(vote.label, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return {label: 0.0 for label in LABELS}
    return {label: counts.get(label, 0) / total for label in LABELS}


def _from_ws(query_id: str, ws: WeakLabel) -> Prediction:
    return Prediction(
        query_id=query_id,
        label=ws.label,
        confidence=ws.confidence,
        provenance=Provenance.HYBRID,
        defaulted=ws.defaulted,
    )


def _from_llm(query_id: str, llm_pred: Prediction) -> Prediction:
    return Prediction(
        query_id=query_id,
        label=llm_pred.label,
        confidence=llm_pred.confidence,
        provenance=Provenance.HYBRID,
    )


def hybrid_classify(
    query_id: str,
    llm_pred: Prediction | None,
    ws: WeakLabel,
    policy: HybridPolicy,
) -> Prediction:
    """Combine one query's two stage outputs under the given policy.

    `llm_pred` is None when the LLM response was out-of-vocabulary or
    errored; the weak-supervision label is used then, with its defaulted
    flag propagated.
    """
    if llm_pred is None:
        return _from_ws(query_id, ws)

    if policy.mode is HybridMode.FILTER_AGREE:
        if ws.defaulted or ws.label is llm_pred.label:
            return _from_llm(query_id, llm_pred)
        if ws.confidence >= policy.ws_min_confidence:
            return _from_ws(query_id, ws)
        return _from_llm(query_id, llm_pred)

    if policy.mode is HybridMode.WS_OVERRIDE:
        if not ws.defaulted:
            return _from_ws(query_id, ws)
        return _from_llm(query_id, llm_pred)

    # confidence_blend
    w = policy.blend_weight
    fractions = _vote_fractions(ws)
    scores = {
        label: w * llm_pred.confidence * (1.0 if label is llm_pred.label else 0.0)
        + (1.0 - w) * fractions[label]
        for label in LABELS
    }
    total = sum(scores.values())
    if total <= 0.0:
        return _from_ws(query_id, ws)
    best = max(scores.values())
    winner = next(label for label in TIE_BREAK_PRIORITY if scores[label] == best)
    return Prediction(
        query_id=query_id,
        label=winner,
        confidence=min(1.0, max(best / total, 1e-9)),
        provenance=Provenance.HYBRID,
    )


def prediction_record(pred: Prediction, query_text: str | None = None) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "id": pred.query_id,
        "label": pred.label.value,
        "confidence": round(pred.confidence, 6),
        "provenance": pred.provenance.value,
    }
    if query_text is not None:
        rec["query"] = query_text
    if pred.defaulted:
        rec["defaulted"] = True
    return rec
