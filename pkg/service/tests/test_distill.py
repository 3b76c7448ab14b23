import json
import math

import pytest
import torch
from torch import nn

import datagen
from kgservice.data import DataFileError, load_export, parse_export_line
from kgservice.distill import (
    StudentTrainConfig,
    _collate,
    batch_sequence_nll,
    distillation_loss,
    encode_example,
    greedy_complete,
    mean_window,
    train_student,
)
from kgservice.models import load_lm
from kgservice.tokenizer import SPECIAL_TOKENS, WordTokenizer


def toy_tokenizer():
    """Two-word vocabulary: specials plus 'a' and 'b'."""

    vocab = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
    vocab["a"] = 5
    vocab["b"] = 6
    return WordTokenizer(vocab=vocab)


class FixedLogitsLM(nn.Module):
    """Stand-in model emitting position-dependent logits, input-independent."""

    def __init__(self, table: torch.Tensor):
        super().__init__()
        self.table = table  # (max_len, vocab)

    def forward(self, input_ids: torch.Tensor):
        batch, length = input_ids.shape
        logits = self.table[:length].unsqueeze(0).expand(batch, -1, -1)

        class Output:
            pass

        out = Output()
        out.logits = logits
        return out


def hand_nll(logits_row, target_index):
    """Independent cross-entropy: log-sum-exp minus the target logit."""

    z = math.log(sum(math.exp(v) for v in logits_row))
    return z - logits_row[target_index]


class TestObjectiveIdentity:
    def test_equals_hand_computed_cross_entropy_on_toy_vocab(self):
        tok = toy_tokenizer()
        # <bos> a [GEN] b <eos>  and  <bos> a [GEN] a b <eos>
        seq1 = [tok.bos_id, 5, tok.gen_id, 6, tok.eos_id]
        seq2 = [tok.bos_id, 5, tok.gen_id, 5, 6, tok.eos_id]
        table = torch.tensor(
            [[0.1 * (p + 1) * (v + 1) for v in range(7)] for p in range(6)]
        )
        model = FixedLogitsLM(table)
        input_ids, loss_mask = _collate([seq1, seq2], tok.pad_id, tok.gen_id)

        rows = table.tolist()
        # Loss positions are the tokens strictly after [GEN] (index 2 here):
        # logits at position j predict the token at j + 1.
        nll1 = hand_nll(rows[2], seq1[3]) + hand_nll(rows[3], seq1[4])
        nll2 = (
            hand_nll(rows[2], seq2[3])
            + hand_nll(rows[3], seq2[4])
            + hand_nll(rows[4], seq2[5])
        )

        per_sequence = batch_sequence_nll(model, input_ids, loss_mask)
        assert float(per_sequence[0]) == pytest.approx(nll1, abs=1e-6)
        assert float(per_sequence[1]) == pytest.approx(nll2, abs=1e-6)
        assert float(distillation_loss(model, input_ids, loss_mask)) == pytest.approx(
            (nll1 + nll2) / 2.0, abs=1e-6
        )

    def test_uniform_logits_give_log_vocab_per_token(self):
        tok = toy_tokenizer()
        seq = [tok.bos_id, 5, tok.gen_id, 6, tok.eos_id]
        model = FixedLogitsLM(torch.zeros((5, 7)))
        input_ids, loss_mask = _collate([seq], tok.pad_id, tok.gen_id)
        # Two scored tokens (the target word and <eos>), uniform over 7 ids.
        assert float(distillation_loss(model, input_ids, loss_mask)) == pytest.approx(
            2.0 * math.log(7.0), abs=1e-6
        )

    def test_condition_tokens_carry_no_loss(self):
        tok = toy_tokenizer()
        seq = [tok.bos_id, 5, 6, 5, tok.gen_id, 6, tok.eos_id]
        _ids, loss_mask = _collate([seq], tok.pad_id, tok.gen_id)
        assert loss_mask.tolist() == [[False, False, False, False, True, True]]


class TestEncoding:
    def test_encode_example_layout(self):
        tok = WordTokenizer.build(["alpha beta [GEN] gamma"])
        example = parse_export_line("alpha beta [GEN] gamma", source="s", line_no=1)
        ids = encode_example(tok, example, max_len=16)
        assert ids[0] == tok.bos_id
        assert ids[-1] == tok.eos_id
        assert ids.count(tok.gen_id) == 1
        assert ids.index(tok.gen_id) == 3

    def test_encode_example_rejects_overlength(self):
        tok = WordTokenizer.build(["alpha beta [GEN] gamma"])
        example = parse_export_line("alpha beta [GEN] gamma", source="s", line_no=1)
        with pytest.raises(ValueError, match="max_len"):
            encode_example(tok, example, max_len=4)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    records = datagen.make_accept_only_records(30, seed=21)
    export = datagen.write_export(tmp_path_factory.mktemp("exp") / "export.txt", records)
    out = tmp_path_factory.mktemp("student")
    result = train_student(export, out, StudentTrainConfig(epochs=2, batch_size=8, seed=0))
    return export, out, result


class TestTraining:
    def test_artifacts_written(self, trained):
        _export, out, result = trained
        assert (out / "weights.pt").exists()
        assert (out / "tokenizer.json").exists()
        config = json.loads((out / "config.json").read_text(encoding="utf-8"))
        assert config["kind"] == "lm"
        assert config["training"]["epochs"] == 2
        assert config["n_examples"] == 30

    def test_per_step_losses_logged(self, trained):
        _export, out, result = trained
        rows = [
            json.loads(line)
            for line in (out / "train_log.jsonl").read_text(encoding="utf-8").splitlines()
        ]
        assert [row["loss"] for row in rows] == result.step_losses
        assert [row["step"] for row in rows] == list(range(1, len(rows) + 1))
        # 30 examples, batch 8 -> 4 steps per epoch, 2 epochs.
        assert len(rows) == 8

    def test_model_reloadable_and_generates(self, trained):
        _export, out, _result = trained
        model, tok, _config = load_lm(out)
        completion = greedy_complete(model, tok, "PersonX hosts a dinner party")
        assert isinstance(completion, str)
        assert completion == greedy_complete(model, tok, "PersonX hosts a dinner party")

    def test_deterministic_given_seed(self, tmp_path, trained):
        export, _out, result = trained
        rerun = train_student(
            export, tmp_path / "again", StudentTrainConfig(epochs=2, batch_size=8, seed=0)
        )
        assert rerun.step_losses == result.step_losses

    def test_malformed_export_aborts_with_line(self, tmp_path):
        path = tmp_path / "export.txt"
        path.write_text("ok line [GEN] tail\nbroken\n", encoding="utf-8")
        with pytest.raises(DataFileError, match="line 2"):
            train_student(path, tmp_path / "out")

    def test_empty_export_aborts(self, tmp_path):
        path = tmp_path / "export.txt"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DataFileError, match="empty"):
            train_student(path, tmp_path / "out")

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError, match="at least one epoch"):
            StudentTrainConfig(epochs=0)


class TestMeanWindow:
    def test_first_and_last_fractions(self):
        values = list(range(1, 21))
        assert mean_window(values, 0.1, last=False) == 1.5
        assert mean_window(values, 0.1, last=True) == 19.5

    def test_tiny_lists_use_at_least_one(self):
        assert mean_window([4.0], 0.1, last=False) == 4.0
        assert mean_window([4.0, 8.0], 0.1, last=True) == 8.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mean_window([], 0.1, last=True)
