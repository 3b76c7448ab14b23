import sys
from pathlib import Path

import pytest
import torch

TESTS_DIR = Path(__file__).resolve().parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

import datagen  # noqa: E402  (needs the path tweak above)

from kgservice.models import LMConfig, build_lm, save_lm  # noqa: E402
from kgservice.tokenizer import WordTokenizer  # noqa: E402
from kgservice.train_critic import CriticTrainConfig, train_critic  # noqa: E402

# Desk-scale override of the reference training recipe: tiny encoder, larger
# learning rate, small batches. Used wherever a test needs a trained critic.
DESK_CONFIG = CriticTrainConfig(
    batch_size=16,
    learning_rate=1e-3,
    max_epochs=4,
    patience=2,
    seed=0,
)


@pytest.fixture(scope="session")
def labeled_splits(tmp_path_factory):
    """Small disjoint train/dev labeled files plus their records."""

    base = tmp_path_factory.mktemp("labels")
    records = datagen.make_labeled_records(320, seed=11)
    train_records, dev_records = records[:240], records[240:]
    train_path = datagen.write_jsonl(base / "labels.train.jsonl", train_records)
    dev_path = datagen.write_jsonl(base / "labels.dev.jsonl", dev_records)
    return {
        "train_path": train_path,
        "dev_path": dev_path,
        "train_records": train_records,
        "dev_records": dev_records,
    }


@pytest.fixture(scope="session")
def trained_critic(tmp_path_factory, labeled_splits):
    """A critic trained once on the small splits, shared across tests."""

    out_dir = tmp_path_factory.mktemp("critic_model")
    result = train_critic(
        labeled_splits["train_path"], labeled_splits["dev_path"], out_dir, DESK_CONFIG
    )
    return {"dir": out_dir, "result": result, **labeled_splits}


@pytest.fixture(scope="session")
def lm_dir(tmp_path_factory):
    """A small randomly initialized LM directory for NLL serving tests."""

    torch.manual_seed(0)
    texts = [datagen.export_line_for(r) for r in datagen.make_accept_only_records(50, seed=3)]
    tokenizer = WordTokenizer.build(texts)
    config = LMConfig(vocab_size=len(tokenizer))
    model = build_lm(config)
    out = tmp_path_factory.mktemp("lm_model")
    save_lm(model, tokenizer, config, out)
    return out
