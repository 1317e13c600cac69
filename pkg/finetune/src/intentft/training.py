"""Adapter fine-tuning loop.

Recipe defaults: 7 epochs, learning rate 2e-5 (decayable to 1.5e-5), micro
batch 8 with 8 gradient-accumulation steps. The base model is frozen; only
low-rank adapter weights receive gradients, and the adapter artifact is saved
separately from the base checkpoint.

Dynamic tuning is implemented as explicit step functions so every adjustment
lands in the training log: learning-rate decay on a validation plateau, rank
increase when accuracy stays low, weight-decay increase on a train/val gap,
and early stopping when improvement ends.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn

from .data import Dataset, WordTokenizer
from .errors import DataFormatError, DivergenceDetected
from .modeling import (
    DEFAULT_TARGETS,
    ModelConfig,
    TinyCausalLM,
    adapter_state_dict,
    attach_adapters,
    base_checksum,
    detach_adapters,
    save_base,
)


@dataclass
class TrainConfig:
    base_model: str = "toy"
    epochs: int = 7
    learning_rate: float = 2e-5
    min_learning_rate: float = 1.5e-5
    batch_size: int = 8
    grad_accumulation: int = 8
    # Adapter scaling is deliberately large: AdamW normalizes gradient
    # magnitude, so with the recipe's 2e-5 learning rate the forward-side
    # scaling alpha/rank is what lets a randomly initialized toy base reach
    # high accuracy within 7 epochs.
    adapter_rank: int = 8
    adapter_alpha: float = 32768.0
    adapter_targets: tuple[str, ...] = DEFAULT_TARGETS
    weight_decay: float = 0.0
    seed: int = 0
    # dynamic-rule knobs
    lr_decay_factor: float = 0.75
    lr_patience: int = 2
    rank_low_threshold: float = 0.45
    rank_patience: int = 3
    max_rank_increases: int = 1
    overfit_gap: float = 0.15
    early_stop_patience: int = 3
    # toy base model shape
    model_dim: int = 64
    model_layers: int = 2
    model_heads: int = 2

    def to_dict(self) -> dict:
        out = asdict(self)
        out["adapter_targets"] = list(self.adapter_targets)
        return out


@dataclass
class TrainResult:
    artifact_dir: Path
    log: dict
    best_val_accuracy: float
    epochs_run: int
    stopped_early: bool


def _encode_batch(
    examples, tokenizer: WordTokenizer, device: torch.device
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad query+sep rows; the prediction position is the sep token."""
    rows = []
    positions = []
    targets = []
    for ex in examples:
        ids, _ = tokenizer.encode_query(ex.query)
        rows.append(ids + [tokenizer.sep_id])
        positions.append(len(ids))
        targets.append(tokenizer.label_ids[ex.label_id])
    width = max(len(r) for r in rows)
    batch = torch.full((len(rows), width), tokenizer.pad_id, dtype=torch.long, device=device)
    for i, row in enumerate(rows):
        batch[i, : len(row)] = torch.tensor(row, dtype=torch.long, device=device)
    return batch, torch.tensor(positions, device=device), torch.tensor(targets, device=device)


def _label_logits(
    model: TinyCausalLM, batch: torch.Tensor, positions: torch.Tensor, tokenizer: WordTokenizer
) -> torch.Tensor:
    logits = model(batch, pad_id=tokenizer.pad_id)
    return logits[torch.arange(len(positions), device=batch.device), positions, :]


@torch.no_grad()
def evaluate_accuracy(
    model: TinyCausalLM, dataset: Dataset, tokenizer: WordTokenizer, batch_size: int = 64
) -> float:
    """Accuracy of the restricted argmax over the three label verbalizations."""
    model.eval()
    correct = 0
    device = next(model.parameters()).device
    label_ids = torch.tensor(tokenizer.label_ids, device=device)
    for start in range(0, len(dataset.examples), batch_size):
        chunk = dataset.examples[start : start + batch_size]
        batch, positions, targets = _encode_batch(chunk, tokenizer, device)
        logits = _label_logits(model, batch, positions, tokenizer)
        restricted = logits[:, label_ids]
        picked = label_ids[restricted.argmax(dim=-1)]
        correct += int((picked == targets).sum())
    model.train()
    return correct / len(dataset.examples)


def train(
    cfg: TrainConfig,
    train_set: Dataset,
    val_set: Dataset,
    out_dir: str | Path,
    device: str = "cpu",
) -> TrainResult:
    """Fine-tune adapters on the training set; returns the saved artifact.

    Raises DivergenceDetected when the loss goes non-finite and
    DataFormatError for empty inputs.
    """
    if not train_set.examples or not val_set.examples:
        raise DataFormatError("train and validation sets must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dev = torch.device(device)
    torch.manual_seed(cfg.seed)

    tokenizer = WordTokenizer.build([ex.query for ex in train_set.examples])
    model_cfg = ModelConfig(
        vocab_size=len(tokenizer),
        dim=cfg.model_dim,
        n_layers=cfg.model_layers,
        n_heads=cfg.model_heads,
        init_seed=cfg.seed,
    )
    model = TinyCausalLM(model_cfg).to(dev)
    save_base(model, out_dir / "base")
    checksum_before = base_checksum(model)

    torch.manual_seed(cfg.seed + 1)
    rank = cfg.adapter_rank
    adapters = attach_adapters(model, rank, cfg.adapter_alpha, cfg.adapter_targets)
    lr = cfg.learning_rate
    weight_decay = cfg.weight_decay

    def make_optimizer() -> torch.optim.Optimizer:
        params = [p for a in adapters for p in a.parameters() if p.requires_grad]
        return torch.optim.AdamW(params, lr=lr, weight_decay=weight_decay)

    optimizer = make_optimizer()
    loss_fn = nn.CrossEntropyLoss()
    log: dict = {
        "config": cfg.to_dict(),
        "model": asdict(model_cfg),
        "train_size": len(train_set.examples),
        "val_size": len(val_set.examples),
        "truncated_fraction_train": train_set.truncated_fraction,
        "epochs": [],
        "adjustments": [],
        "nondeterministic_ops": [],
    }

    def adjust(epoch: int, rule: str, detail: str) -> None:
        log["adjustments"].append({"epoch": epoch, "rule": rule, "detail": detail})

    best_val = -1.0
    stale_evals = 0
    stopped_early = False
    rank_increases = 0
    epochs_run = 0
    order_gen = torch.Generator().manual_seed(cfg.seed + 2)
    started = time.perf_counter()

    for epoch in range(1, cfg.epochs + 1):
        epochs_run = epoch
        model.train()
        order = torch.randperm(len(train_set.examples), generator=order_gen).tolist()
        total_loss = 0.0
        micro_batches = 0
        optimizer.zero_grad()
        pending = 0
        for start in range(0, len(order), cfg.batch_size):
            chunk = [train_set.examples[i] for i in order[start : start + cfg.batch_size]]
            batch, positions, targets = _encode_batch(chunk, tokenizer, dev)
            logits = _label_logits(model, batch, positions, tokenizer)
            loss = loss_fn(logits, targets) / cfg.grad_accumulation
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            loss.backward()
            total_loss += loss_value * cfg.grad_accumulation
            micro_batches += 1
            pending += 1
            if pending == cfg.grad_accumulation:
                optimizer.step()
                optimizer.zero_grad()
                pending = 0
        if pending:
            optimizer.step()
            optimizer.zero_grad()

        train_acc = evaluate_accuracy(model, train_set, tokenizer)
        val_acc = evaluate_accuracy(model, val_set, tokenizer)
        log["epochs"].append(
            {
                "epoch": epoch,
                "train_loss": total_loss / max(micro_batches, 1),
                "train_accuracy": train_acc,
                "val_accuracy": val_acc,
                "learning_rate": lr,
                "weight_decay": weight_decay,
                "adapter_rank": rank,
            }
        )

        improved = val_acc > best_val + 1e-9
        if improved:
            best_val = val_acc
            stale_evals = 0
        else:
            stale_evals += 1

        # Rule 1: decay the learning rate when validation stalls.
        if stale_evals >= cfg.lr_patience and lr > cfg.min_learning_rate:
            new_lr = max(lr * cfg.lr_decay_factor, cfg.min_learning_rate)
            adjust(epoch, "lr_decay", f"{lr:.2e} -> {new_lr:.2e} after {stale_evals} stale evals")
            lr = new_lr
            for group in optimizer.param_groups:
                group["lr"] = lr
        # Rule 2: increase adapter rank when performance stays low; the old
        # adapters are discarded since they were not learning. Bounded so a
        # hard problem cannot reset training forever.
        if (
            stale_evals >= cfg.rank_patience
            and val_acc < cfg.rank_low_threshold
            and rank_increases < cfg.max_rank_increases
        ):
            rank *= 2
            rank_increases += 1
            adjust(epoch, "rank_increase", f"rank doubled to {rank} at val_acc {val_acc:.3f}")
            detach_adapters(model, merge=False)
            adapters = attach_adapters(model, rank, cfg.adapter_alpha, cfg.adapter_targets)
            optimizer = make_optimizer()
            stale_evals = 0
        # Rule 3: raise weight decay when the train/val gap signals overfit.
        if train_acc - val_acc > cfg.overfit_gap:
            new_wd = max(weight_decay * 2, 1e-4)
            adjust(epoch, "weight_decay", f"{weight_decay:.1e} -> {new_wd:.1e} on gap "
                                          f"{train_acc - val_acc:.3f}")
            weight_decay = new_wd
            for group in optimizer.param_groups:
                group["weight_decay"] = weight_decay
        # Rule 4: stop when improvement has ended.
        if stale_evals >= cfg.early_stop_patience:
            adjust(epoch, "early_stop", f"no improvement for {stale_evals} evals")
            stopped_early = True
            break

    checksum_after = base_checksum(model)
    log["final"] = {
        "best_val_accuracy": best_val,
        "epochs_run": epochs_run,
        "stopped_early": stopped_early,
        "seconds": round(time.perf_counter() - started, 3),
        "base_checksum_before": checksum_before,
        "base_checksum_after": checksum_after,
        "base_unchanged": checksum_before == checksum_after,
    }

    adapter_dir = out_dir / "adapter"
    adapter_dir.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(adapters), adapter_dir / "weights.pt")
    with open(adapter_dir / "adapter_config.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "rank": rank,
                "alpha": cfg.adapter_alpha,
                "targets": list(cfg.adapter_targets),
                "labels": list(tokenizer.label_ids),
            },
            fh,
            indent=2,
        )
    tokenizer.save(out_dir / "vocab.json")
    with open(out_dir / "training_log.json", "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=2)
    return TrainResult(
        artifact_dir=out_dir,
        log=log,
        best_val_accuracy=best_val,
        epochs_run=epochs_run,
        stopped_early=stopped_early,
    )
