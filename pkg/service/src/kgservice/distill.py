"""Sequence-level distillation of the student language model.

Training examples are export lines ``"{condition} [GEN] {target}"``. Each is
encoded as ``<bos> condition [GEN] target <eos>`` and the objective is the
mean, over sequences, of the total NLL of the tokens strictly after the
``[GEN]`` delimiter (the target and the closing ``<eos>``); the condition
tokens contribute context but no loss.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import nn
from torch.nn import functional as F

from kgservice.data import ExportExample, load_export
from kgservice.models import LMConfig, build_lm, save_lm
from kgservice.tokenizer import WordTokenizer

TRAIN_LOG_FILE = "train_log.jsonl"
METRICS_FILE = "metrics.json"


@dataclass(frozen=True)
class StudentTrainConfig:
    """Hyperparameters for distillation; at least one epoch is required."""

    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 5e-3
    max_len: int = 96
    seed: int = 0
    n_embd: int = 64
    n_layer: int = 2
    n_head: int = 2

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"distillation requires at least one epoch, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def encode_example(
    tokenizer: WordTokenizer, example: ExportExample, max_len: int
) -> list[int]:
    """Encode one example as ``<bos> condition [GEN] target <eos>`` ids."""

    ids = (
        [tokenizer.bos_id]
        + tokenizer.encode(example.condition)
        + [tokenizer.gen_id]
        + tokenizer.encode(example.target)
        + [tokenizer.eos_id]
    )
    if len(ids) > max_len:
        raise ValueError(
            f"example exceeds max_len={max_len} ({len(ids)} tokens): {example.line!r}"
        )
    return ids


def _collate(
    sequences: Sequence[Sequence[int]], pad_id: int, gen_id: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad a batch and build the target-position loss mask.

    The mask is aligned with ``input_ids[:, 1:]`` (the shifted targets): a
    position is masked in only when its target token sits strictly after the
    ``[GEN]`` delimiter and is not padding.
    """

    width = max(len(seq) for seq in sequences)
    input_ids = torch.full((len(sequences), width), pad_id, dtype=torch.long)
    loss_mask = torch.zeros((len(sequences), width - 1), dtype=torch.bool)
    for row, seq in enumerate(sequences):
        input_ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        gen_index = seq.index(gen_id)
        # Targets are input_ids[1:], so target index j corresponds to the
        # token at sequence position j + 1.
        loss_mask[row, gen_index : len(seq) - 1] = True
    return input_ids, loss_mask


def batch_sequence_nll(
    model: nn.Module, input_ids: torch.Tensor, loss_mask: torch.Tensor
) -> torch.Tensor:
    """Per-sequence total NLL (nats) over the masked target positions."""

    logits = model(input_ids=input_ids).logits
    vocab = logits.size(-1)
    per_token = F.cross_entropy(
        logits[:, :-1, :].reshape(-1, vocab),
        input_ids[:, 1:].reshape(-1),
        reduction="none",
    ).reshape(input_ids.size(0), -1)
    return (per_token * loss_mask.float()).sum(dim=1)


def distillation_loss(
    model: nn.Module, input_ids: torch.Tensor, loss_mask: torch.Tensor
) -> torch.Tensor:
    """The training objective: mean sequence NLL over the batch."""

    return batch_sequence_nll(model, input_ids, loss_mask).mean()


@dataclass
class DistillResult:
    out_dir: Path
    step_losses: list[float] = field(default_factory=list)
    n_examples: int = 0
    epochs: int = 0


def train_student(
    export_path: str | Path,
    out_dir: str | Path,
    config: StudentTrainConfig = StudentTrainConfig(),
) -> DistillResult:
    """Train a student LM on an export file and persist it with its logs."""

    examples = load_export(export_path)
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)

    tokenizer = WordTokenizer.build(ex.line for ex in examples)
    lm_config = LMConfig(
        vocab_size=len(tokenizer),
        n_embd=config.n_embd,
        n_layer=config.n_layer,
        n_head=config.n_head,
        n_positions=config.max_len + 2,
    )
    model = build_lm(lm_config)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=0.0, betas=(0.9, 0.95)
    )

    encoded = [encode_example(tokenizer, ex, config.max_len) for ex in examples]
    result = DistillResult(out_dir=Path(out_dir), n_examples=len(examples))
    log_rows: list[dict] = []

    model.train()
    step = 0
    for epoch in range(config.epochs):
        order = list(range(len(encoded)))
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = [encoded[i] for i in order[start : start + config.batch_size]]
            input_ids, loss_mask = _collate(batch, tokenizer.pad_id, tokenizer.gen_id)
            loss = distillation_loss(model, input_ids, loss_mask)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            loss_value = float(loss.detach())
            result.step_losses.append(loss_value)
            log_rows.append({"step": step, "epoch": epoch + 1, "loss": loss_value})
        result.epochs = epoch + 1

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_lm(
        model,
        tokenizer,
        lm_config,
        out,
        extra={"training": asdict(config), "n_examples": len(examples)},
    )
    with (out / TRAIN_LOG_FILE).open("w", encoding="utf-8") as handle:
        for row in log_rows:
            handle.write(json.dumps(row) + "\n")
    summary = {
        "n_examples": len(examples),
        "epochs": result.epochs,
        "steps": step,
        "first_loss": result.step_losses[0],
        "last_loss": result.step_losses[-1],
    }
    (out / METRICS_FILE).write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return result


@torch.no_grad()
def greedy_complete(
    model: nn.Module,
    tokenizer: WordTokenizer,
    condition: str,
    *,
    max_new_tokens: int = 32,
) -> str:
    """Greedy-decode a target for ``condition``, stopping at ``<eos>``."""

    model.eval()
    ids = [tokenizer.bos_id] + tokenizer.encode(condition) + [tokenizer.gen_id]
    generated: list[int] = []
    for _ in range(max_new_tokens):
        input_ids = torch.tensor([ids + generated], dtype=torch.long)
        logits = model(input_ids=input_ids).logits
        next_id = int(torch.argmax(logits[0, -1, :]))
        if next_id == tokenizer.eos_id:
            break
        generated.append(next_id)
    return tokenizer.decode(generated)


def mean_window(values: Sequence[float], fraction: float, *, last: bool) -> float:
    """Mean of the first or last ``fraction`` of ``values`` (at least one)."""

    if not values:
        raise ValueError("no values")
    count = max(1, int(len(values) * fraction))
    window = values[-count:] if last else values[:count]
    return sum(window) / len(window)
