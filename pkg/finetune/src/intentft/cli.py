"""Trainer CLI: `intentft train` and `intentft predict`.

Consumes the curation pipeline's JSONL exports and emits prediction JSONL
that the evaluation CLI scores directly.
"""

from __future__ import annotations

import argparse
import sys

from .data import load_dataset, load_queries
from .errors import IntentFtError
from .inference import load_artifact, predict, write_predictions
from .training import TrainConfig, train


def cmd_train(args: argparse.Namespace) -> int:
    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        grad_accumulation=args.grad_accumulation,
        adapter_rank=args.adapter_rank,
        adapter_alpha=args.adapter_alpha,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    train_set = load_dataset(args.train)
    val_set = load_dataset(args.val)
    result = train(cfg, train_set, val_set, args.out)
    final = result.log["final"]
    print(
        f"trained {result.epochs_run} epochs, best val accuracy "
        f"{result.best_val_accuracy:.3f}, base unchanged={final['base_unchanged']}",
        file=sys.stderr,
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model, tokenizer = load_artifact(args.artifact, merge=args.merge)
    records = load_queries(args.input)
    predictions = predict(model, tokenizer, records)
    n = write_predictions(args.output, predictions)
    print(f"wrote {n} predictions to {args.output}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentft", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="fine-tune adapters on a curation export")
    p.add_argument("--train", required=True, help="training JSONL {query,label}")
    p.add_argument("--val", required=True, help="validation JSONL {query,label}")
    p.add_argument("--out", required=True, help="artifact directory")
    p.add_argument("--epochs", type=int, default=7)
    p.add_argument("--learning-rate", type=float, default=2e-5)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--grad-accumulation", type=int, default=8)
    p.add_argument("--adapter-rank", type=int, default=8)
    p.add_argument("--adapter-alpha", type=float, default=32768.0)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="confidence-scored inference")
    p.add_argument("--artifact", required=True)
    p.add_argument("--input", required=True, help="JSONL with {id?, query}")
    p.add_argument("--output", required=True)
    p.add_argument("--merge", action="store_true", help="fold adapters into the base")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IntentFtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
