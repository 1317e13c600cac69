"""Report rendering: markdown and TSV tables plus matplotlib figures written
alongside the canonical JSON output."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import METRIC_NAMES, ComparisonReport, EvalReport


def _marker(row_significance: dict, metric: str) -> str:
    res = row_significance.get(metric)
    if res is None or not res.significant:
        return ""
    return "↑*" if res.direction == "better" else "↓*"


def comparison_markdown(report: ComparisonReport) -> str:
    """Markdown table mirroring the comparison: one row per system, macro
    metrics with significance markers against the baseline."""
    lines = [
        "| System | Macro precision | Macro recall | Macro F1 |",
        "|---|---|---|---|",
    ]
    for row in report.rows:
        cells = []
        for metric in METRIC_NAMES:
            value = f"{row.report.macro(metric):.3f}"
            cells.append(value + _marker(row.significance, metric))
        name = f"**{row.name}**" if row.is_baseline else row.name
        lines.append(f"| {name} | {cells[0]} | {cells[1]} | {cells[2]} |")
    lines.append("")
    lines.append(
        f"Baseline: {report.baseline}. n = {report.gold_n}. "
        f"Paired permutation test ({report.iterations} iterations) per metric; "
        f"Bonferroni-corrected alpha = {report.corrected_alpha:.6g} "
        f"(family of {report.family_size}). "
        "Markers: ↑* significantly better, ↓* significantly worse."
    )
    return "\n".join(lines) + "\n"


def comparison_tsv(report: ComparisonReport) -> str:
    """Tab-separated metric table; values identical to the JSON report."""
    lines = ["system\tbaseline\tmacro_precision\tmacro_recall\tmacro_f1\tsignificant_metrics"]
    for row in report.rows:
        sig = ",".join(
            f"{m}:{row.significance[m].direction}"
            for m in METRIC_NAMES
            if m in row.significance and row.significance[m].significant
        )
        lines.append(
            "\t".join(
                [
                    row.name,
                    "yes" if row.is_baseline else "no",
                    f"{row.report.macro_precision:.6f}",
                    f"{row.report.macro_recall:.6f}",
                    f"{row.report.macro_f1:.6f}",
                    sig,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def single_markdown(name: str, report: EvalReport) -> str:
    lines = [
        f"## {name}",
        "",
        f"n = {report.n}, unparseable predictions = {report.matrix.unparseable_count}",
        "",
        "| Class | Precision | Recall | F1 | Support |",
        "|---|---|---|---|---|",
    ]
    for label, metrics in report.per_class.items():
        lines.append(
            f"| {label.value} | {metrics.precision:.3f} | {metrics.recall:.3f} "
            f"| {metrics.f1:.3f} | {metrics.support} |"
        )
    lines.append(
        f"| macro | {report.macro_precision:.3f} | {report.macro_recall:.3f} "
        f"| {report.macro_f1:.3f} | {report.n} |"
    )
    return "\n".join(lines) + "\n"


def save_comparison_figure(report: ComparisonReport, path: str | Path) -> None:
    """Grouped bar chart of macro P/R/F1 per system, significance-starred."""
    names = [row.name for row in report.rows]
    x = np.arange(len(names), dtype=float)
    width = 0.26
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(names)), 4.0))
    for k, metric in enumerate(METRIC_NAMES):
        values = [row.report.macro(metric) for row in report.rows]
        bars = ax.bar(x + (k - 1) * width, values, width, label=f"macro {metric}")
        for bar, row in zip(bars, report.rows):
            mark = _marker(row.significance, metric)
            if mark:
                ax.annotate(
                    mark,
                    (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center",
                    va="bottom",
                    fontsize=9,
                )
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("macro score")
    ax.set_title(f"Intent classification vs baseline '{report.baseline}' (n={report.gold_n})")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_single_figure(name: str, report: EvalReport, path: str | Path) -> None:
    """Per-class metric bars for a single system."""
    labels = [label.value for label in report.per_class]
    x = np.arange(len(labels), dtype=float)
    width = 0.26
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    series = {
        "precision": [m.precision for m in report.per_class.values()],
        "recall": [m.recall for m in report.per_class.values()],
        "f1": [m.f1 for m in report.per_class.values()],
    }
    for k, (metric, values) in enumerate(series.items()):
        ax.bar(x + (k - 1) * width, values, width, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{name} (n={report.n}, macro F1={report.macro_f1:.3f})")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_throughput_figure(points: list[dict[str, Any]], path: str | Path) -> None:
    """Throughput line plot from bench points [{workers, queries_per_second}]."""
    workers = [p["workers"] for p in points]
    qps = [p["queries_per_second"] for p in points]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(workers, qps, marker="o")
    ax.set_xlabel("workers")
    ax.set_ylabel("queries / second")
    ax.set_title("Corpus labeling throughput")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
