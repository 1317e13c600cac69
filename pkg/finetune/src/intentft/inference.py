"""Confidence-scored inference from a saved adapter artifact.

Confidence is the probability mass of the winning label verbalization after
renormalizing the next-token distribution over the three canonical label
tokens, so the per-query probabilities always sum to 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .data import LABELS, WordTokenizer
from .errors import MissingAdapter
from .modeling import attach_adapters, detach_adapters, load_adapter_state, load_base
from .training import _encode_batch, _label_logits
from .data import Example


@dataclass(frozen=True)
class ConfidencePrediction:
    query_id: str
    query: str
    label: str
    confidence: float
    probabilities: dict[str, float]

    def to_record(self) -> dict:
        return {
            "id": self.query_id,
            "query": self.query,
            "label": self.label,
            "confidence": round(self.confidence, 6),
            "provenance": "llm-ft",
            "probabilities": {k: round(v, 6) for k, v in self.probabilities.items()},
        }


def load_artifact(artifact_dir: str | Path, merge: bool = False):
    """Rebuild the frozen base and attach (or merge) the trained adapter."""
    artifact_dir = Path(artifact_dir)
    adapter_dir = artifact_dir / "adapter"
    if not (adapter_dir / "weights.pt").exists():
        raise MissingAdapter(f"no adapter weights under {artifact_dir}")
    model = load_base(artifact_dir / "base")
    tokenizer = WordTokenizer.load(artifact_dir / "vocab.json")
    with open(adapter_dir / "adapter_config.json", "r", encoding="utf-8") as fh:
        adapter_cfg = json.load(fh)
    adapters = attach_adapters(
        model, adapter_cfg["rank"], adapter_cfg["alpha"], tuple(adapter_cfg["targets"])
    )
    state = torch.load(adapter_dir / "weights.pt", weights_only=True)
    load_adapter_state(adapters, state)
    if merge:
        detach_adapters(model, merge=True)
    model.eval()
    return model, tokenizer


def _query_id(rec: dict) -> str:
    rid = rec.get("id")
    if rid is not None:
        return str(rid)
    return hashlib.sha256(str(rec["query"]).encode("utf-8")).hexdigest()[:16]


@torch.no_grad()
def predict(
    model,
    tokenizer: WordTokenizer,
    records: list[dict],
    batch_size: int = 64,
) -> list[ConfidencePrediction]:
    device = next(model.parameters()).device
    label_ids = torch.tensor(tokenizer.label_ids, device=device)
    out: list[ConfidencePrediction] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        examples = [Example(query=str(r["query"]), label_id=0) for r in chunk]
        batch, positions, _ = _encode_batch(examples, tokenizer, device)
        logits = _label_logits(model, batch, positions, tokenizer)
        probs = torch.softmax(logits, dim=-1)[:, label_ids]
        probs = probs / probs.sum(dim=-1, keepdim=True)
        best = probs.argmax(dim=-1)
        for row, rec in enumerate(chunk):
            dist = {LABELS[i]: float(probs[row, i]) for i in range(3)}
            winner = int(best[row])
            out.append(
                ConfidencePrediction(
                    query_id=_query_id(rec),
                    query=str(rec["query"]),
                    label=LABELS[winner],
                    confidence=float(probs[row, winner]),
                    probabilities=dist,
                )
            )
    return out


def write_predictions(path: str | Path, predictions: list[ConfidencePrediction]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred.to_record(), ensure_ascii=False))
            fh.write("\n")
    return len(predictions)
