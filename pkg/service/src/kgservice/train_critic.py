"""Supervised training of the acceptability critic.

The trainer consumes labeled-triple JSONL files (disjoint train/dev splits),
optimizes cross entropy on accept/reject verdicts, early-stops on dev recall
at the precision target, and writes the model directory alongside a metrics
report and per-triple dev scores in the shared score-file format, so the
generation toolkit can re-evaluate the same numbers from files alone.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch.nn import functional as F

from kgservice.data import (
    EVAL_NAMES,
    NAME_POOL,
    LabeledExample,
    check_disjoint_ids,
    load_labeled,
    render_triple,
    sample_name_pair,
    substitute_names,
)
from kgservice.metrics import average_precision, precision_curve, recall_at_precision
from kgservice.models import (
    CriticModel,
    CriticModelConfig,
    critic_probabilities,
    save_critic,
)
from kgservice.tokenizer import WordTokenizer

METRICS_FILE = "metrics.json"
DEV_SCORES_FILE = "dev_scores.jsonl"


@dataclass(frozen=True)
class CriticTrainConfig:
    """Training hyperparameters; defaults follow the reference recipe.

    The reference recipe (batch 128, dropout 0.1, learning rate 5e-6, early
    stopping on dev recall at 80% precision, name substitution on) is sized
    for a large pretrained encoder; desk-scale runs override batch size,
    learning rate, and the architecture fields.
    """

    batch_size: int = 128
    dropout: float = 0.1
    learning_rate: float = 5e-6
    max_epochs: int = 20
    patience: int = 3
    target_precision: float = 0.8
    name_substitution: bool = True
    seed: int = 0
    max_len: int = 64
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    intermediate_size: int = 128
    head_hidden_size: int | None = None

    def __post_init__(self) -> None:
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0 (0 runs an untrained dry run)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 < self.target_precision <= 1.0:
            raise ValueError("target_precision must be in (0, 1]")


def _judged(examples: Sequence[LabeledExample]) -> list[LabeledExample]:
    return [ex for ex in examples if ex.verdict != "no_judgement"]


def _labels(examples: Sequence[LabeledExample]) -> dict[str, bool]:
    return {ex.triple_id: ex.verdict == "accept" for ex in examples}


def _train_text(ex: LabeledExample, names: tuple[str, str] | None) -> str:
    text = render_triple(ex.event, ex.relation, ex.tail)
    return substitute_names(text, names) if names else text


def _eval_texts(examples: Sequence[LabeledExample], substitution: bool) -> list[str]:
    names = EVAL_NAMES if substitution else None
    return [_train_text(ex, names) for ex in examples]


def _build_tokenizer(
    train: Sequence[LabeledExample], substitution: bool
) -> WordTokenizer:
    texts = [_train_text(ex, None) for ex in train]
    if substitution:
        # Make sure every name the augmentation can produce is in-vocabulary.
        texts.append(" ".join(NAME_POOL))
    return WordTokenizer.build(texts)


@dataclass
class CriticTrainResult:
    out_dir: Path
    dev_ap: float
    dev_recall_at_precision: float
    epochs_trained: int
    best_epoch: int
    dev_scores: dict[str, float]


def score_examples(
    model: CriticModel,
    tokenizer: WordTokenizer,
    examples: Sequence[LabeledExample],
    *,
    name_substitution: bool,
) -> dict[str, float]:
    """Deterministic eval-mode scores for labeled examples, keyed by id."""

    texts = _eval_texts(examples, name_substitution)
    probs = critic_probabilities(model, tokenizer, texts)
    return {ex.triple_id: prob for ex, prob in zip(examples, probs)}


def train_critic(
    train_path: str | Path,
    dev_path: str | Path,
    out_dir: str | Path,
    config: CriticTrainConfig = CriticTrainConfig(),
) -> CriticTrainResult:
    """Train a critic and persist model, metrics, and dev scores.

    Aborts when the train and dev splits share triple ids, and refuses (via
    the file guard) to read any file whose name marks it as a test split.
    """

    train_all = load_labeled(train_path, for_training=True)
    dev_all = load_labeled(dev_path, for_training=True)
    check_disjoint_ids(train_all, dev_all)

    train = _judged(train_all)
    dev = _judged(dev_all)
    if not train:
        raise ValueError(f"{train_path}: no judged training examples")
    if not dev:
        raise ValueError(f"{dev_path}: no judged dev examples")

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)

    tokenizer = _build_tokenizer(train, config.name_substitution)
    model_config = CriticModelConfig(
        vocab_size=len(tokenizer),
        hidden_size=config.hidden_size,
        num_layers=config.num_layers,
        num_heads=config.num_heads,
        intermediate_size=config.intermediate_size,
        max_len=config.max_len,
        dropout=config.dropout,
        head_hidden_size=config.head_hidden_size,
    )
    model = CriticModel(model_config)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)

    dev_labels = _labels(dev)

    def dev_metric() -> tuple[float, dict[str, float]]:
        scores = score_examples(
            model, tokenizer, dev, name_substitution=config.name_substitution
        )
        return recall_at_precision(scores, dev_labels, config.target_precision), scores

    best_recall, best_scores = dev_metric()
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_epoch = 0
    epochs_without_improvement = 0
    epochs_trained = 0

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = list(range(len(train)))
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            names = sample_name_pair(rng) if config.name_substitution else None
            texts = [_train_text(ex, names) for ex in batch]
            encoded = [
                tokenizer.encode(t, add_bos=True, add_eos=True, max_len=config.max_len)
                for t in texts
            ]
            width = max(len(seq) for seq in encoded)
            input_ids = torch.full((len(encoded), width), tokenizer.pad_id, dtype=torch.long)
            attention_mask = torch.zeros((len(encoded), width), dtype=torch.long)
            for row, seq in enumerate(encoded):
                input_ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
                attention_mask[row, : len(seq)] = 1
            targets = torch.tensor(
                [1 if ex.verdict == "accept" else 0 for ex in batch], dtype=torch.long
            )
            logits = model(input_ids, attention_mask)
            loss = F.cross_entropy(logits, targets)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        epochs_trained = epoch

        recall, scores = dev_metric()
        if recall > best_recall:
            best_recall, best_scores = recall, scores
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_epoch = epoch
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= config.patience:
                break

    model.load_state_dict(best_state)
    model.eval()

    dev_ap = average_precision(best_scores, dev_labels)
    curve = precision_curve(best_scores, dev_labels)

    out = Path(out_dir)
    save_critic(
        model,
        tokenizer,
        out,
        extra={
            "training": asdict(config),
            "n_train": len(train),
            "n_dev": len(dev),
            "n_no_judgement_dropped": (len(train_all) - len(train))
            + (len(dev_all) - len(dev)),
        },
    )
    metrics = {
        "dev_ap": dev_ap,
        "dev_recall_at_precision": best_recall,
        "target_precision": config.target_precision,
        "precision_curve": curve,
        "epochs_trained": epochs_trained,
        "best_epoch": best_epoch,
        "n_train": len(train),
        "n_dev": len(dev),
    }
    (out / METRICS_FILE).write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (out / DEV_SCORES_FILE).open("w", encoding="utf-8") as handle:
        for ex in dev:
            handle.write(
                json.dumps({"triple_id": ex.triple_id, "score": best_scores[ex.triple_id]})
                + "\n"
            )
    return CriticTrainResult(
        out_dir=out,
        dev_ap=dev_ap,
        dev_recall_at_precision=best_recall,
        epochs_trained=epochs_trained,
        best_epoch=best_epoch,
        dev_scores=best_scores,
    )
