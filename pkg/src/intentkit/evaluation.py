"""Scoring and statistical comparison of intent classifiers.

Per-class and macro precision/recall/F1 over the three-way confusion matrix,
paired permutation tests on the macro metrics, and Bonferroni-corrected
significance against a baseline system.

Unparseable or missing predictions are scored as a synthetic fourth "null"
label: they count against the gold class's recall but never appear in any
predicted column, so the documented failure mode is penalized rather than
dropped.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DataFormatError,
    DuplicatePrediction,
    EmptyGold,
    MisalignedInputs,
)
from .model import LABELS, GoldRecord, IntentLabel, Prediction

_LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}
_NULL = 3  # synthetic index for unparseable/missing predictions

METRIC_NAMES = ("precision", "recall", "f1")


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    zero_precision_denominator: bool = False
    zero_recall_denominator: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
        }
        if self.zero_precision_denominator:
            out["zero_precision_denominator"] = True
        if self.zero_recall_denominator:
            out["zero_recall_denominator"] = True
        return out


@dataclass(frozen=True)
class ConfusionMatrix:
    """3x3 counts indexed (gold, predicted) plus the null-prediction count."""

    counts: tuple[tuple[int, int, int], ...]
    gold_counts: tuple[int, int, int]
    unparseable_count: int

    @property
    def total(self) -> int:
        return sum(self.gold_counts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "labels": [label.value for label in LABELS],
            "counts": [list(row) for row in self.counts],
            "gold_counts": list(self.gold_counts),
            "unparseable_count": self.unparseable_count,
            "total": self.total,
        }


@dataclass(frozen=True)
class EvalReport:
    n: int
    per_class: dict[IntentLabel, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    matrix: ConfusionMatrix
    extra_predictions: int = 0

    def macro(self, metric: str) -> float:
        return {
            "precision": self.macro_precision,
            "recall": self.macro_recall,
            "f1": self.macro_f1,
        }[metric]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
            "per_class": {label.value: m.to_dict() for label, m in self.per_class.items()},
            "matrix": self.matrix.to_dict(),
            "extra_predictions": self.extra_predictions,
        }


def _as_label_map(preds: Iterable[Prediction | Mapping[str, Any]]) -> dict[str, IntentLabel | None]:
    """Index predictions by query id; label None marks unparseable entries."""
    if isinstance(preds, Mapping):  # already an id -> label map
        return dict(preds)
    out: dict[str, IntentLabel | None] = {}
    for p in preds:
        if isinstance(p, Prediction):
            qid, label = p.query_id, p.label
        else:
            qid = str(p.get("id") or p.get("query_id") or "")
            if not qid:
                raise DataFormatError(f"prediction record without id: {p!r}")
            raw = p.get("label")
            label = IntentLabel(raw) if raw in {l.value for l in LABELS} else None
        if qid in out:
            raise DuplicatePrediction(f"more than one prediction for query id {qid}")
        out[qid] = label
    return out


def _metrics_from_arrays(gold: np.ndarray, pred: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized per-class (P, R, F1) with the zero-denominator-is-zero rule."""
    joint = np.bincount(gold * 4 + pred, minlength=12).reshape(3, 4)
    tp = joint.diagonal().astype(float)
    pred_counts = joint[:, :3].sum(axis=0).astype(float)
    gold_counts = joint.sum(axis=1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_counts > 0, tp / np.maximum(pred_counts, 1), 0.0)
        recall = np.where(gold_counts > 0, tp / np.maximum(gold_counts, 1), 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.maximum(pr, 1e-300), 0.0)
    return precision, recall, f1


def macro_scores(gold: np.ndarray, pred: np.ndarray) -> tuple[float, float, float]:
    """Macro (P, R, F1): unweighted means over the three classes."""
    precision, recall, f1 = _metrics_from_arrays(gold, pred)
    return float(precision.mean()), float(recall.mean()), float(f1.mean())


def align(
    preds: Iterable[Prediction | Mapping[str, Any]],
    gold: Sequence[GoldRecord],
) -> tuple[np.ndarray, np.ndarray, int]:
    """Arrays aligned on gold order; returns (gold_idx, pred_idx, extra)."""
    if not gold:
        raise EmptyGold("no gold records to score against")
    by_id = _as_label_map(preds)
    gold_idx = np.empty(len(gold), dtype=np.int64)
    pred_idx = np.empty(len(gold), dtype=np.int64)
    seen = set()
    for i, record in enumerate(gold):
        qid = record.query.query_id
        seen.add(qid)
        gold_idx[i] = _LABEL_INDEX[record.label]
        label = by_id.get(qid)
        pred_idx[i] = _LABEL_INDEX[label] if label is not None else _NULL
    extra = sum(1 for qid in by_id if qid not in seen)
    return gold_idx, pred_idx, extra


def score(
    preds: Iterable[Prediction | Mapping[str, Any]],
    gold: Sequence[GoldRecord],
) -> EvalReport:
    """Score one system: confusion matrix, per-class and macro P/R/F1."""
    gold_idx, pred_idx, extra = align(preds, gold)
    precision, recall, f1 = _metrics_from_arrays(gold_idx, pred_idx)
    joint = np.bincount(gold_idx * 4 + pred_idx, minlength=12).reshape(3, 4)
    pred_counts = joint[:, :3].sum(axis=0)
    gold_counts = joint.sum(axis=1)
    per_class = {}
    for label, c in _LABEL_INDEX.items():
        per_class[label] = ClassMetrics(
            precision=float(precision[c]),
            recall=float(recall[c]),
            f1=float(f1[c]),
            support=int(gold_counts[c]),
            zero_precision_denominator=bool(pred_counts[c] == 0),
            zero_recall_denominator=bool(gold_counts[c] == 0),
        )
    matrix = ConfusionMatrix(
        counts=tuple(tuple(int(x) for x in row[:3]) for row in joint),
        gold_counts=tuple(int(x) for x in gold_counts),
        unparseable_count=int(joint[:, 3].sum()),
    )
    return EvalReport(
        n=len(gold),
        per_class=per_class,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        matrix=matrix,
        extra_predictions=extra,
    )


@dataclass(frozen=True)
class SignificanceResult:
    """Outcome of one paired permutation test on one macro metric."""

    metric: str
    observed_diff: float
    p_value: float
    iterations: int
    corrected_alpha: float
    significant: bool
    direction: str  # "better" | "worse" | "equal" (system a relative to b)
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric": self.metric,
            "observed_diff": self.observed_diff,
            "p_value": self.p_value,
            "iterations": self.iterations,
            "corrected_alpha": self.corrected_alpha,
            "significant": self.significant,
            "direction": self.direction,
            "seed": self.seed,
        }


def _metric_index(metric: str) -> int:
    try:
        return METRIC_NAMES.index(metric)
    except ValueError:
        raise DataFormatError(f"unknown metric {metric!r}; choose from {METRIC_NAMES}") from None


def paired_permutation_test(
    a: Mapping[str, IntentLabel | None],
    b: Mapping[str, IntentLabel | None],
    gold: Sequence[GoldRecord],
    metric: str = "f1",
    iterations: int = 5000,
    seed: int = 0,
    corrected_alpha: float = 0.05,
) -> SignificanceResult:
    """Two-sided paired permutation test of macro `metric` between systems.

    Each iteration swaps the two systems' predictions per query with
    probability one half; iteration randomness derives from (seed, i) so the
    result is reproducible and independent of any parallel partitioning.
    p = (1 + #{|perm| >= |observed|}) / (1 + iterations).
    """
    if iterations < 1:
        raise DataFormatError(f"iterations must be >= 1, got {iterations}")
    want = {rec.query.query_id for rec in gold}
    for name, system in (("a", a), ("b", b)):
        missing = want - set(system)
        if missing:
            raise MisalignedInputs(
                f"system {name} lacks {len(missing)} gold ids, e.g. {sorted(missing)[:3]}"
            )
    gold_idx = np.array([_LABEL_INDEX[rec.label] for rec in gold], dtype=np.int64)

    def to_idx(system: Mapping[str, IntentLabel | None]) -> np.ndarray:
        return np.array(
            [
                _LABEL_INDEX[system[rec.query.query_id]]
                if system[rec.query.query_id] is not None
                else _NULL
                for rec in gold
            ],
            dtype=np.int64,
        )

    a_idx, b_idx = to_idx(a), to_idx(b)
    mi = _metric_index(metric)
    observed = macro_scores(gold_idx, a_idx)[mi] - macro_scores(gold_idx, b_idx)[mi]
    n = len(gold)
    hits = 0
    for i in range(iterations):
        rng = np.random.default_rng((seed, i))
        mask = rng.integers(0, 2, size=n, dtype=np.int64).astype(bool)
        perm_a = np.where(mask, b_idx, a_idx)
        perm_b = np.where(mask, a_idx, b_idx)
        stat = macro_scores(gold_idx, perm_a)[mi] - macro_scores(gold_idx, perm_b)[mi]
        if abs(stat) >= abs(observed) - 1e-12:
            hits += 1
    p = (1 + hits) / (1 + iterations)
    direction = "equal" if observed == 0 else ("better" if observed > 0 else "worse")
    return SignificanceResult(
        metric=metric,
        observed_diff=float(observed),
        p_value=p,
        iterations=iterations,
        corrected_alpha=corrected_alpha,
        significant=p < corrected_alpha,
        direction=direction,
        seed=seed,
    )


@dataclass(frozen=True)
class BonferroniDecision:
    p_value: float
    corrected_alpha: float
    significant: bool


def bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[BonferroniDecision]:
    """Per-test decisions at the corrected level alpha / m."""
    m = len(p_values)
    if m < 1:
        raise DataFormatError("bonferroni needs at least one p-value")
    corrected = alpha / m
    return [BonferroniDecision(p, corrected, p < corrected) for p in p_values]


@dataclass
class SystemRow:
    name: str
    report: EvalReport
    significance: dict[str, SignificanceResult] = field(default_factory=dict)
    is_baseline: bool = False


@dataclass
class ComparisonReport:
    """Table of systems against a shared gold set, baseline-marked."""

    gold_n: int
    baseline: str
    rows: list[SystemRow]
    alpha: float
    corrected_alpha: float
    family_size: int
    iterations: int
    seed: int
    permutation_statistic: str = "per-metric macro score difference"

    def to_dict(self) -> dict[str, Any]:
        return {
            "gold_n": self.gold_n,
            "baseline": self.baseline,
            "alpha": self.alpha,
            "bonferroni_family_size": self.family_size,
            "corrected_alpha": self.corrected_alpha,
            "iterations": self.iterations,
            "seed": self.seed,
            "permutation_statistic": self.permutation_statistic,
            "systems": [
                {
                    "name": row.name,
                    "is_baseline": row.is_baseline,
                    "report": row.report.to_dict(),
                    "significance": {
                        m: res.to_dict() for m, res in sorted(row.significance.items())
                    },
                }
                for row in self.rows
            ],
        }


def compare_report(
    gold: Sequence[GoldRecord],
    systems: Mapping[str, Iterable[Prediction | Mapping[str, Any]]],
    baseline: str,
    iterations: int = 5000,
    alpha: float = 0.05,
    seed: int = 0,
    family_size: int | None = None,
) -> ComparisonReport:
    """Score every system and permutation-test each challenger against the
    baseline on all three macro metrics, Bonferroni-corrected.

    The default correction family is (number of challengers) x 3 metrics;
    the family size used is recorded in the report.
    """
    if baseline not in systems:
        raise DataFormatError(f"baseline {baseline!r} not among systems {sorted(systems)}")
    label_maps = {name: _as_label_map(preds) for name, preds in systems.items()}
    reports = {name: score(label_maps[name], gold) for name in systems}
    challengers = [name for name in systems if name != baseline]
    m = family_size if family_size is not None else max(1, len(challengers) * len(METRIC_NAMES))
    corrected = alpha / m
    rows: list[SystemRow] = []
    for name in systems:
        row = SystemRow(name=name, report=reports[name], is_baseline=(name == baseline))
        if name != baseline:
            for metric in METRIC_NAMES:
                row.significance[metric] = paired_permutation_test(
                    label_maps[name],
                    label_maps[baseline],
                    gold,
                    metric=metric,
                    iterations=iterations,
                    seed=derive_comparison_seed(seed, name, metric),
                    corrected_alpha=corrected,
                )
        rows.append(row)
    return ComparisonReport(
        gold_n=len(gold),
        baseline=baseline,
        rows=rows,
        alpha=alpha,
        corrected_alpha=corrected,
        family_size=m,
        iterations=iterations,
        seed=seed,
    )


def derive_comparison_seed(seed: int, system: str, metric: str) -> int:
    """Stable per-(system, metric) permutation seed."""
    digest = hashlib.sha256(f"{seed}:{system}:{metric}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
