"""Single entry point for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 remote/transport
error. Logs go to stderr; data goes to files only. Every subcommand writes a
reproducibility manifest next to its output, and every randomized subcommand
records its seed (generating and printing one when omitted).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Iterator, Sequence

import yaml

from . import __version__
from .errors import (
    ConfigError,
    DataError,
    DataFormatError,
    OverlapDetected,
    TransportError,
)
from .model import LABELS, IntentLabel, LabelVote, Prediction, Provenance, Query, WeakLabel
from . import curation, evaluation, io, report as report_mod
from .hybrid import HybridPolicy, hybrid_classify, prediction_record
from .labeling import FunctionSet, builtin_function_set, label_corpus
from .llm import ModelEndpoint, batch_item_record, classify_batch
from .manifest import write_manifest
from .prompts import FewShotBank, Scenario, default_bank

log = logging.getLogger("intentkit")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    generated = int.from_bytes(os.urandom(4), "big")
    print(f"generated seed: {generated}", file=sys.stderr)
    return generated


def _read_query_inputs(path: Path, fmt: str, query_col: int, id_col: int | None) -> Iterator[tuple[str | None, str]]:
    """Yield (id, raw_text) pairs; malformed rows surface as empty text so the
    labeling stream counts them instead of aborting."""
    if fmt == "tsv":
        for _lineno, query, err in io.read_tsv_queries(path, query_col=query_col, id_col=id_col):
            if err is not None:
                yield None, ""
                continue
            assert query is not None
            yield query.query_id, query.text
    else:
        for _lineno, rec, err in io.read_jsonl_lenient(path):
            if err is not None or rec is None or "query" not in rec:
                yield None, ""
                continue
            rid = rec.get("id")
            yield (str(rid) if rid is not None else None), str(rec["query"])


def _detect_format(path: Path, explicit: str) -> str:
    if explicit != "auto":
        return explicit
    if path.suffix.lower() in (".tsv", ".txt"):
        return "tsv"
    return "jsonl"


def _load_function_set(path: str | None) -> FunctionSet:
    return FunctionSet.load(path) if path else builtin_function_set()


def cmd_label(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    fs = _load_function_set(args.functions)
    in_path = Path(args.input)
    fmt = _detect_format(in_path, args.format)
    inputs = _read_query_inputs(in_path, fmt, args.query_col, args.id_col)
    stream, corpus_report = label_corpus(inputs, fs, workers=args.workers)
    n = io.write_jsonl(args.output, stream)
    print(
        f"labeled {n} queries ({corpus_report.errors} skipped) at "
        f"{corpus_report.queries_per_second:.0f} q/s",
        file=sys.stderr,
    )
    write_manifest(
        args.output,
        "label",
        config={
            "input": str(in_path),
            "format": fmt,
            "functions": args.functions or "builtin",
            "workers": args.workers,
            "output": str(args.output),
        },
        inputs=[in_path] + ([Path(args.functions)] if args.functions else []),
        started=started,
        stats=corpus_report.to_dict(),
    )
    return 0


def cmd_classify_llm(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    endpoint = ModelEndpoint.from_config(args.endpoint)
    scenario = Scenario(args.scenario)
    bank = FewShotBank.load_jsonl(args.bank) if args.bank else default_bank()
    queries = []
    for rec in io.read_jsonl(args.input):
        queries.append(io.record_to_query(rec))
    items, batch_report = classify_batch(endpoint, scenario, queries, bank=bank, rng_seed=args.seed)
    records = (batch_item_record(item, query) for item, query in zip(items, queries))
    io.write_jsonl(args.output, records)
    report_path = Path(args.output).with_name(Path(args.output).stem + ".report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(batch_report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"classified {batch_report.ok}/{batch_report.total} "
        f"(oov={batch_report.oov_count}, errors={batch_report.error_count})",
        file=sys.stderr,
    )
    write_manifest(
        args.output,
        "classify-llm",
        config={
            "scenario": scenario.value,
            "endpoint": endpoint.public_dict(),
            "input": str(args.input),
            "output": str(args.output),
        },
        seeds={} if args.seed is None else {"jitter": args.seed},
        inputs=[args.input, args.endpoint],
        started=started,
        stats=batch_report.to_dict(),
    )
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    sample = curation.stratified_sample(
        io.read_jsonl(args.input), args.per_class, seed, source=str(args.input)
    )
    io.write_jsonl(args.output, sample.records())
    write_manifest(
        args.output,
        "sample",
        config={"input": str(args.input), "per_class": args.per_class, "output": str(args.output)},
        seeds={"sample": seed},
        inputs=[args.input],
        started=started,
        stats={"total": 3 * args.per_class},
    )
    return 0


def _regroup(records: list[dict[str, Any]], seed: int, source: str) -> curation.StratifiedSample:
    per_class: dict[IntentLabel, list[dict[str, Any]]] = {label: [] for label in LABELS}
    for rec in records:
        per_class[curation.record_label(rec)].append(rec)
    return curation.StratifiedSample(per_class=per_class, seed=seed, source=source)


def cmd_split(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    records = list(io.read_jsonl(args.input))
    sample = _regroup(records, seed, str(args.input))
    train, val = curation.split_train_val(sample, ratio=args.ratio, seed=seed)
    export = curation.finetune_record if args.ft_export else (lambda rec: rec)
    io.write_jsonl(args.train, (export(r) for r in train))
    io.write_jsonl(args.val, (export(r) for r in val))
    write_manifest(
        args.train,
        "split",
        config={
            "input": str(args.input),
            "ratio": args.ratio,
            "train": str(args.train),
            "val": str(args.val),
            "ft_export": args.ft_export,
        },
        seeds={"split": seed},
        inputs=[args.input],
        started=started,
        stats={"train": len(train), "val": len(val)},
    )
    return 0


def cmd_select_hc(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    exclude: set[str] = set()
    if args.exclude:
        exclude = {curation.record_id(rec) for rec in io.read_jsonl(args.exclude)}
    selected = curation.select_high_confidence(
        io.read_jsonl(args.input),
        threshold=args.threshold,
        n_per_class=args.per_class,
        seed=seed,
        exclude=exclude,
    )
    flat: list[dict[str, Any]] = []
    for label in LABELS:
        flat.extend(selected[label])
    io.write_jsonl(args.output, flat)
    write_manifest(
        args.output,
        "select-hc",
        config={
            "input": str(args.input),
            "threshold": args.threshold,
            "per_class": args.per_class,
            "exclude": str(args.exclude) if args.exclude else None,
            "output": str(args.output),
        },
        seeds={"select": seed},
        inputs=[args.input] + ([args.exclude] if args.exclude else []),
        started=started,
        stats={"selected": len(flat), "excluded_ids": len(exclude)},
    )
    return 0


def cmd_assemble(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    random_records = list(io.read_jsonl(args.random))
    hc_records = list(io.read_jsonl(args.high_conf))
    if args.threshold is not None:
        for rec in hc_records:
            conf = rec.get("confidence")
            if conf is None or float(conf) < args.threshold:
                raise DataFormatError(
                    f"high-confidence record below threshold {args.threshold}: {rec.get('id')}"
                )
    random_part = _regroup(random_records, seed, str(args.random))
    hc_part: dict[IntentLabel, list[dict[str, Any]]] = {label: [] for label in LABELS}
    for rec in hc_records:
        hc_part[curation.record_label(rec)].append(rec)
    augmented = curation.assemble_augmented(
        random_part, hc_part, threshold=args.threshold or 0.0, seed=seed
    )
    export = curation.finetune_record if args.ft_export else (lambda rec: rec)
    io.write_jsonl(args.output, (export(r) for r in augmented.records))
    write_manifest(
        args.output,
        "assemble",
        config={
            "random": str(args.random),
            "high_conf": str(args.high_conf),
            "threshold": args.threshold,
            "output": str(args.output),
            "ft_export": args.ft_export,
        },
        seeds={"assemble": seed},
        inputs=[args.random, args.high_conf],
        started=started,
        stats={"total": len(augmented.records), "per_class": augmented.per_class_counts},
    )
    return 0


def _parse_system_arg(arg: str) -> tuple[str, Path]:
    if "=" in arg:
        name, _, path = arg.partition("=")
        return name, Path(path)
    path = Path(arg)
    return path.stem, path


def cmd_eval(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    gold = io.read_gold(args.gold)
    systems: dict[str, list[dict[str, Any]]] = {}
    input_paths: list[Path] = [Path(args.gold)]
    for arg in args.preds:
        name, path = _parse_system_arg(arg)
        if name in systems:
            raise DataFormatError(f"duplicate system name {name!r}")
        systems[name] = list(io.read_jsonl(path))
        input_paths.append(path)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("")

    if len(systems) == 1:
        name = next(iter(systems))
        single = evaluation.score(systems[name], gold)
        payload: dict[str, Any] = {"system": name, "report": single.to_dict(), "seed": seed}
        markdown = report_mod.single_markdown(name, single)
        if not args.no_figures:
            report_mod.save_single_figure(name, single, stem.with_suffix(".png"))
        stats = {"macro_f1": single.macro_f1}
    else:
        baseline = args.baseline or next(iter(systems))
        comparison = evaluation.compare_report(
            gold,
            systems,
            baseline=baseline,
            iterations=args.iterations,
            alpha=args.alpha,
            seed=seed,
        )
        payload = comparison.to_dict()
        markdown = report_mod.comparison_markdown(comparison)
        with open(stem.with_suffix(".tsv"), "w", encoding="utf-8") as fh:
            fh.write(report_mod.comparison_tsv(comparison))
        if not args.no_figures:
            report_mod.save_comparison_figure(comparison, stem.with_suffix(".png"))
        stats = {
            "systems": len(systems),
            "significant": sum(
                1
                for row in comparison.rows
                for res in row.significance.values()
                if res.significant
            ),
        }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(stem.with_suffix(".md"), "w", encoding="utf-8") as fh:
        fh.write(markdown)
    write_manifest(
        out,
        "eval",
        config={
            "gold": str(args.gold),
            "preds": list(args.preds),
            "baseline": args.baseline,
            "iterations": args.iterations,
            "alpha": args.alpha,
            "out": str(out),
        },
        seeds={"permutation": seed},
        inputs=input_paths,
        started=started,
        stats=stats,
    )
    return 0


def _weak_label_from_record(rec: dict[str, Any]) -> WeakLabel:
    votes = tuple(
        LabelVote(source_lf=name, label=None if value == "abstain" else IntentLabel(value))
        for name, value in (rec.get("votes") or {}).items()
    )
    return WeakLabel(
        label=IntentLabel(str(rec["label"])),
        confidence=float(rec.get("confidence", 1.0)),
        votes=votes,
        defaulted=bool(rec.get("defaulted", False)),
        tie_broken=bool(rec.get("tie_broken", False)),
    )


def cmd_hybrid(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    policy = HybridPolicy.from_file(args.policy)
    ws_by_id: dict[str, dict[str, Any]] = {}
    for rec in io.read_jsonl(args.ws_preds):
        ws_by_id[curation.record_id(rec)] = rec
    out_records = []
    for rec in io.read_jsonl(args.llm_preds):
        qid = curation.record_id(rec)
        if qid not in ws_by_id:
            raise DataFormatError(f"no weak-supervision record for query id {qid}")
        ws_rec = ws_by_id[qid]
        ws = _weak_label_from_record(ws_rec)
        llm_label = rec.get("label")
        llm_pred = None
        if llm_label is not None:
            llm_pred = Prediction(
                query_id=qid,
                label=IntentLabel(str(llm_label)),
                confidence=float(rec.get("confidence") or 1.0),
                provenance=Provenance.LLM_ICL,
            )
        combined = hybrid_classify(qid, llm_pred, ws, policy)
        out_records.append(prediction_record(combined, query_text=rec.get("query")))
    io.write_jsonl(args.out, out_records)
    write_manifest(
        args.out,
        "hybrid",
        config={
            "llm_preds": str(args.llm_preds),
            "ws_preds": str(args.ws_preds),
            "policy": {
                "mode": policy.mode.value,
                "ws_min_confidence": policy.ws_min_confidence,
                "blend_weight": policy.blend_weight,
            },
            "out": str(args.out),
        },
        inputs=[args.llm_preds, args.ws_preds, args.policy],
        started=started,
        stats={"combined": len(out_records)},
    )
    return 0


def synthetic_queries(count: int, seed: int) -> Iterator[tuple[str | None, str]]:
    """Deterministic benchmark corpus mixing the three intent shapes."""
    import random as _random

    rng = _random.Random(seed)
    info_topics = ["weather", "history", "photosynthesis", "gravity", "volcanoes", "tides"]
    brands = ["acme", "globex", "initech", "umbrella", "stark", "wayne"]
    things = ["shoes", "laptop", "tickets", "headphones", "camera", "guitar"]
    for i in range(count):
        kind = i % 3
        if kind == 0:
            text = f"how does {rng.choice(info_topics)} work in {rng.randrange(1800, 2030)}"
        elif kind == 1:
            text = f"{rng.choice(brands)} {rng.choice(['login', 'official site', 'homepage'])}"
        else:
            text = f"{rng.choice(['buy', 'download', 'order'])} {rng.choice(things)} {i}"
        yield f"q{i:07d}", text


def cmd_bench(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    fs = _load_function_set(args.functions)
    worker_counts = sorted({int(w) for w in args.workers.split(",")})
    points = []
    baseline_lines: list[str] | None = None
    for workers in worker_counts:
        stream, corpus_report = label_corpus(
            synthetic_queries(args.count, seed), fs, workers=workers
        )
        lines = [io.dumps_record(rec) for rec in stream]
        if baseline_lines is None:
            baseline_lines = lines
        elif lines != baseline_lines:
            raise DataFormatError(f"workers={workers} output differs from serial output")
        points.append({"workers": workers, **corpus_report.to_dict()})
        print(
            f"workers={workers}: {corpus_report.queries_per_second:.0f} q/s",
            file=sys.stderr,
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"count": args.count, "seed": seed, "points": points, "outputs_identical": True}
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report_mod.save_throughput_figure(points, out.with_suffix(".png"))
    write_manifest(
        out,
        "bench",
        config={"count": args.count, "workers": worker_counts, "out": str(out)},
        seeds={"corpus": seed},
        started=started,
        stats={"points": points},
    )
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    """Execute a declarative multi-stage pipeline config."""
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict) or not isinstance(cfg.get("stages"), list):
        raise ConfigError(f"{args.config}: expected a mapping with a 'stages' list")
    for i, stage in enumerate(cfg["stages"]):
        if not isinstance(stage, dict) or "cmd" not in stage:
            raise ConfigError(f"{args.config}: stage {i} needs a 'cmd' key")
        argv: list[str] = [str(stage["cmd"])]
        for key, value in (stage.get("args") or {}).items():
            flag = "--" + str(key).replace("_", "-")
            if isinstance(value, bool):
                if value:
                    argv.append(flag)
            elif isinstance(value, list):
                argv.append(flag)
                argv.extend(str(v) for v in value)
            else:
                argv.extend([flag, str(value)])
        print(f"run[{i}]: {' '.join(argv)}", file=sys.stderr)
        code = main(argv)
        if code != 0:
            return code
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="intentkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"intentkit {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("label", help="weak-supervision labeling of a query corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--functions", default=None, help="function set YAML (default: builtin)")
    p.add_argument("--output", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=["auto", "tsv", "jsonl"], default="auto")
    p.add_argument("--query-col", type=int, default=1, help="TSV query column (ORCAS layout)")
    p.add_argument("--id-col", type=int, default=0, help="TSV id column; -1 to disable")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("classify-llm", help="prompt a hosted model over a query file")
    p.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    p.add_argument("--endpoint", required=True, help="endpoint config file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--bank", default=None, help="few-shot bank JSONL (default: packaged)")
    p.add_argument("--seed", type=int, default=None, help="retry jitter seed")
    p.set_defaults(func=cmd_classify_llm)

    p = sub.add_parser("sample", help="stratified random sample from a labeled corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("split", help="stratified train/validation split")
    p.add_argument("--input", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--ft-export", action="store_true", help="emit only {query,label}")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("select-hc", help="select high-confidence predictions per class")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--exclude", default=None, help="JSONL whose ids are excluded")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_select_hc)

    p = sub.add_parser("assemble", help="merge random + high-confidence parts")
    p.add_argument("--random", required=True)
    p.add_argument("--high-conf", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--ft-export", action="store_true")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("eval", help="score prediction files against a gold set")
    p.add_argument("--gold", required=True)
    p.add_argument("--preds", nargs="+", required=True, help="[name=]path.jsonl")
    p.add_argument("--baseline", default=None)
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("hybrid", help="combine LLM and weak-supervision predictions")
    p.add_argument("--llm-preds", required=True)
    p.add_argument("--ws-preds", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hybrid)

    p = sub.add_parser("bench", help="labeling throughput benchmark")
    p.add_argument("--count", type=int, default=60000)
    p.add_argument("--workers", default="1,2,4,8", help="comma-separated worker counts")
    p.add_argument("--functions", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("run", help="execute a declarative pipeline config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "id_col", None) == -1:
        args.id_col = None
    try:
        return args.func(args)
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
