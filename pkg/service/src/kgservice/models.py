"""Model construction, persistence, and deterministic inference.

Both models are built from explicit configurations (never downloaded), so the
service works in offline environments and stays small enough to train on a
desk machine:

* the critic is a bidirectional transformer encoder with a 2-layer MLP head
  over the first-token representation; the head's hidden width is
  configurable and defaults to the encoder width;
* the language model is a small causal transformer with an LM head, used both
  for NLL scoring and as the distillation student.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn
from transformers import GPT2Config, GPT2LMHeadModel, RobertaConfig, RobertaModel

from kgservice.tokenizer import WordTokenizer

TOKENIZER_FILE = "tokenizer.json"
WEIGHTS_FILE = "weights.pt"
CONFIG_FILE = "config.json"


@dataclass(frozen=True)
class CriticModelConfig:
    """Architecture of the critic encoder and its classification head."""

    vocab_size: int
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    intermediate_size: int = 128
    max_len: int = 64
    dropout: float = 0.1
    # Hidden width of the 2-layer MLP head; None means "same as the encoder".
    head_hidden_size: int | None = None

    def resolved_head_hidden(self) -> int:
        return self.head_hidden_size if self.head_hidden_size is not None else self.hidden_size


class CriticModel(nn.Module):
    """Encoder + 2-layer MLP head producing accept/reject logits."""

    def __init__(self, config: CriticModelConfig):
        super().__init__()
        self.config = config
        encoder_config = RobertaConfig(
            vocab_size=config.vocab_size,
            hidden_size=config.hidden_size,
            num_hidden_layers=config.num_layers,
            num_attention_heads=config.num_heads,
            intermediate_size=config.intermediate_size,
            # Position ids start after the padding id, so leave headroom.
            max_position_embeddings=config.max_len + 4,
            hidden_dropout_prob=config.dropout,
            attention_probs_dropout_prob=config.dropout,
            pad_token_id=0,
            bos_token_id=2,
            eos_token_id=3,
            type_vocab_size=1,
        )
        self.encoder = RobertaModel(encoder_config, add_pooling_layer=False)
        head_hidden = config.resolved_head_hidden()
        self.head = nn.Sequential(
            nn.Linear(config.hidden_size, head_hidden),
            nn.Tanh(),
            nn.Dropout(config.dropout),
            nn.Linear(head_hidden, 2),
        )

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        hidden = self.encoder(input_ids=input_ids, attention_mask=attention_mask)
        first_token = hidden.last_hidden_state[:, 0, :]
        return self.head(first_token)


@dataclass(frozen=True)
class LMConfig:
    """Architecture of the causal language model.

    Defaults are tuned for small from-scratch models fit to sampled data:
    dropout off (matching the sampling distribution closely is the goal),
    input and output embeddings untied, and a wider init range — all of which
    speed up convergence at this scale.
    """

    vocab_size: int
    n_embd: int = 64
    n_layer: int = 2
    n_head: int = 2
    n_positions: int = 128
    dropout: float = 0.0
    tie_embeddings: bool = False
    init_range: float = 0.1


def build_lm(config: LMConfig) -> GPT2LMHeadModel:
    """Construct a randomly initialized causal LM from an explicit config."""

    return GPT2LMHeadModel(
        GPT2Config(
            vocab_size=config.vocab_size,
            n_positions=config.n_positions,
            n_embd=config.n_embd,
            n_layer=config.n_layer,
            n_head=config.n_head,
            embd_pdrop=config.dropout,
            attn_pdrop=config.dropout,
            resid_pdrop=config.dropout,
            tie_word_embeddings=config.tie_embeddings,
            initializer_range=config.init_range,
            bos_token_id=2,
            eos_token_id=3,
        )
    )


def _pad_batch(
    sequences: Sequence[Sequence[int]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad variable-length id sequences into a batch with a mask."""

    width = max(len(seq) for seq in sequences)
    input_ids = torch.full((len(sequences), width), pad_id, dtype=torch.long)
    attention_mask = torch.zeros((len(sequences), width), dtype=torch.long)
    for row, seq in enumerate(sequences):
        input_ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        attention_mask[row, : len(seq)] = 1
    return input_ids, attention_mask


@torch.no_grad()
def critic_probabilities(
    model: CriticModel,
    tokenizer: WordTokenizer,
    texts: Sequence[str],
    *,
    batch_size: int = 64,
) -> list[float]:
    """Acceptance probability for each text, deterministically (eval mode)."""

    model.eval()
    probs: list[float] = []
    for start in range(0, len(texts), batch_size):
        chunk = texts[start : start + batch_size]
        encoded = [
            tokenizer.encode(text, add_bos=True, add_eos=True, max_len=model.config.max_len)
            for text in chunk
        ]
        input_ids, attention_mask = _pad_batch(encoded, tokenizer.pad_id)
        logits = model(input_ids, attention_mask)
        accept = torch.softmax(logits, dim=-1)[:, 1]
        probs.extend(float(p) for p in accept)
    return probs


@torch.no_grad()
def lm_total_nll(
    model: GPT2LMHeadModel,
    tokenizer: WordTokenizer,
    text: str,
    *,
    max_len: int | None = None,
) -> tuple[float, int]:
    """Total NLL of ``text`` in nats under the LM, and its token count.

    Each word token is scored conditioned on ``<bos>`` plus the preceding
    tokens; specials themselves are not scored, so ``n_tokens`` equals the
    plain word count of the text.
    """

    model.eval()
    limit = max_len if max_len is not None else int(model.config.n_positions) - 1
    token_ids = tokenizer.encode(text, max_len=limit)
    n_tokens = len(token_ids)
    if n_tokens == 0:
        return 0.0, 0
    input_ids = torch.tensor([[tokenizer.bos_id] + token_ids], dtype=torch.long)
    logits = model(input_ids=input_ids).logits
    log_probs = torch.log_softmax(logits[0, :-1, :], dim=-1)
    targets = input_ids[0, 1:]
    picked = log_probs[torch.arange(n_tokens), targets]
    total = float(-picked.sum())
    return total, n_tokens


def save_critic(model: CriticModel, tokenizer: WordTokenizer, out_dir: str | Path, *, extra: dict | None = None) -> None:
    """Persist a critic: weights, tokenizer, and full configuration metadata."""

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out / WEIGHTS_FILE)
    tokenizer.save(out / TOKENIZER_FILE)
    payload = {"kind": "critic", "model": asdict(model.config)}
    if extra:
        payload.update(extra)
    (out / CONFIG_FILE).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_critic(model_dir: str | Path) -> tuple[CriticModel, WordTokenizer]:
    path = Path(model_dir)
    payload = json.loads((path / CONFIG_FILE).read_text(encoding="utf-8"))
    if payload.get("kind") != "critic":
        raise ValueError(f"{path}: not a critic model directory")
    config = CriticModelConfig(**payload["model"])
    model = CriticModel(config)
    model.load_state_dict(torch.load(path / WEIGHTS_FILE, map_location="cpu", weights_only=True))
    model.eval()
    tokenizer = WordTokenizer.load(path / TOKENIZER_FILE)
    return model, tokenizer


def save_lm(model: GPT2LMHeadModel, tokenizer: WordTokenizer, config: LMConfig, out_dir: str | Path, *, extra: dict | None = None) -> None:
    """Persist a language model: weights, tokenizer, and configuration."""

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out / WEIGHTS_FILE)
    tokenizer.save(out / TOKENIZER_FILE)
    payload = {"kind": "lm", "model": asdict(config)}
    if extra:
        payload.update(extra)
    (out / CONFIG_FILE).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_lm(model_dir: str | Path) -> tuple[GPT2LMHeadModel, WordTokenizer, LMConfig]:
    path = Path(model_dir)
    payload = json.loads((path / CONFIG_FILE).read_text(encoding="utf-8"))
    if payload.get("kind") != "lm":
        raise ValueError(f"{path}: not a language model directory")
    config = LMConfig(**payload["model"])
    model = build_lm(config)
    model.load_state_dict(torch.load(path / WEIGHTS_FILE, map_location="cpu", weights_only=True))
    model.eval()
    tokenizer = WordTokenizer.load(path / TOKENIZER_FILE)
    return model, tokenizer, config
