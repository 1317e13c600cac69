"""Toy causal language model plus low-rank adapters.

The base model is a small decoder-only transformer whose weights are frozen
at construction; only the adapter matrices train. Desk-scale stand-in for the
full-scale recipe: the training loop, adapter mechanics, and confidence
computation are identical in shape, so the whole pipeline is verifiable on a
CPU in seconds.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from .errors import MissingAdapter


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    dim: int = 64
    n_layers: int = 2
    n_heads: int = 2
    max_len: int = 40
    init_seed: int = 0


class CausalSelfAttention(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.dim // cfg.n_heads
        self.q_proj = nn.Linear(cfg.dim, cfg.dim)
        self.k_proj = nn.Linear(cfg.dim, cfg.dim)
        self.v_proj = nn.Linear(cfg.dim, cfg.dim)
        self.out_proj = nn.Linear(cfg.dim, cfg.dim)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        bsz, seq, dim = x.shape
        shape = (bsz, seq, self.n_heads, self.head_dim)
        q = self.q_proj(x).view(shape).transpose(1, 2)
        k = self.k_proj(x).view(shape).transpose(1, 2)
        v = self.v_proj(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        causal = torch.triu(torch.ones(seq, seq, dtype=torch.bool, device=x.device), diagonal=1)
        scores = scores.masked_fill(causal, float("-inf"))
        scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bsz, seq, dim)
        return self.out_proj(out)


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.attn = CausalSelfAttention(cfg)
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.dim, 4 * cfg.dim),
            nn.GELU(),
            nn.Linear(4 * cfg.dim, cfg.dim),
        )

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), pad_mask)
        return x + self.mlp(self.ln2(x))


class TinyCausalLM(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.init_seed)
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.dim)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.dim)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.dim)
        self.lm_head = nn.Linear(cfg.dim, cfg.vocab_size)

    def forward(self, input_ids: torch.Tensor, pad_id: int) -> torch.Tensor:
        seq = input_ids.shape[1]
        pad_mask = input_ids == pad_id
        pos = torch.arange(seq, device=input_ids.device)
        x = self.tok_emb(input_ids) + self.pos_emb(pos)[None, :, :]
        for block in self.blocks:
            x = block(x, pad_mask)
        return self.lm_head(self.ln_f(x))


class LoRALinear(nn.Module):
    """Frozen linear layer plus a trainable low-rank update.

    forward(x) = base(x) + (alpha / rank) * B(A(x)); B starts at zero so the
    wrapped module is exactly the base at initialization.
    """

    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        self.base = base
        for param in self.base.parameters():
            param.requires_grad_(False)
        self.rank = rank
        self.alpha = alpha
        self.scaling = alpha / rank
        self.lora_a = nn.Linear(base.in_features, rank, bias=False)
        self.lora_b = nn.Linear(rank, base.out_features, bias=False)
        nn.init.normal_(self.lora_a.weight, std=1.0 / rank)
        nn.init.zeros_(self.lora_b.weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * self.lora_b(self.lora_a(x))

    def merge_into_base(self) -> nn.Linear:
        """Fold the adapter into a fresh Linear for adapter-free inference."""
        merged = nn.Linear(self.base.in_features, self.base.out_features)
        with torch.no_grad():
            merged.weight.copy_(
                self.base.weight + self.scaling * (self.lora_b.weight @ self.lora_a.weight)
            )
            merged.bias.copy_(self.base.bias)
        return merged


DEFAULT_TARGETS = ("q_proj", "v_proj", "lm_head")


def freeze_base(model: nn.Module) -> None:
    for param in model.parameters():
        param.requires_grad_(False)


def attach_adapters(
    model: TinyCausalLM, rank: int, alpha: float, targets: tuple[str, ...] = DEFAULT_TARGETS
) -> list[LoRALinear]:
    """Wrap the target linears in-place; returns the adapter modules."""
    freeze_base(model)
    adapters: list[LoRALinear] = []
    for block in model.blocks:
        for name in ("q_proj", "k_proj", "v_proj", "out_proj"):
            if name in targets:
                wrapped = LoRALinear(getattr(block.attn, name), rank, alpha)
                setattr(block.attn, name, wrapped)
                adapters.append(wrapped)
    if "lm_head" in targets:
        wrapped = LoRALinear(model.lm_head, rank, alpha)
        model.lm_head = wrapped
        adapters.append(wrapped)
    return adapters


def detach_adapters(model: TinyCausalLM, merge: bool = False) -> None:
    """Unwrap every LoRALinear, optionally merging its update into the base."""
    for block in model.blocks:
        for name in ("q_proj", "k_proj", "v_proj", "out_proj"):
            module = getattr(block.attn, name)
            if isinstance(module, LoRALinear):
                setattr(block.attn, name, module.merge_into_base() if merge else module.base)
    if isinstance(model.lm_head, LoRALinear):
        model.lm_head = model.lm_head.merge_into_base() if merge else model.lm_head.base


def adapter_state_dict(adapters: list[LoRALinear]) -> dict[str, torch.Tensor]:
    out = {}
    for i, adapter in enumerate(adapters):
        out[f"adapter.{i}.lora_a.weight"] = adapter.lora_a.weight.detach().clone()
        out[f"adapter.{i}.lora_b.weight"] = adapter.lora_b.weight.detach().clone()
    return out


def load_adapter_state(adapters: list[LoRALinear], state: dict[str, torch.Tensor]) -> None:
    for i, adapter in enumerate(adapters):
        with torch.no_grad():
            adapter.lora_a.weight.copy_(state[f"adapter.{i}.lora_a.weight"])
            adapter.lora_b.weight.copy_(state[f"adapter.{i}.lora_b.weight"])


def base_checksum(model: TinyCausalLM) -> str:
    """Bit-level digest of every frozen base tensor, adapter weights excluded.

    Keys are normalized so the digest is identical whether or not adapters
    are currently attached.
    """
    h = hashlib.sha256()
    state = {
        k.replace(".base.", "."): v
        for k, v in model.state_dict().items()
        if ".lora_a." not in k and ".lora_b." not in k
    }
    for key in sorted(state):
        h.update(key.encode("utf-8"))
        h.update(state[key].detach().cpu().numpy().tobytes())
    return h.hexdigest()


def save_base(model: TinyCausalLM, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "config.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(model.cfg), fh, indent=2)
    clean_state = {
        k: v for k, v in model.state_dict().items() if ".lora_a." not in k and ".lora_b." not in k
    }
    torch.save(clean_state, directory / "weights.pt")


def load_base(directory: str | Path) -> TinyCausalLM:
    directory = Path(directory)
    if not (directory / "config.json").exists():
        raise MissingAdapter(f"no base model at {directory}")
    with open(directory / "config.json", "r", encoding="utf-8") as fh:
        cfg = ModelConfig(**json.load(fh))
    model = TinyCausalLM(cfg)
    state = torch.load(directory / "weights.pt", weights_only=True)
    # Strip the LoRA wrapper prefix ("base.") if the checkpoint was saved
    # while adapters were attached.
    fixed = {k.replace(".base.", "."): v for k, v in state.items()}
    model.load_state_dict(fixed)
    freeze_base(model)
    return model
