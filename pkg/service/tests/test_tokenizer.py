import json

import pytest

from kgservice.tokenizer import (
    BOS_TOKEN,
    EOS_TOKEN,
    GEN_TOKEN,
    PAD_TOKEN,
    SPECIAL_TOKENS,
    UNK_TOKEN,
    WordTokenizer,
    text_to_words,
)


@pytest.fixture()
def tokenizer():
    return WordTokenizer.build(
        [
            "PersonX bakes sourdough bread [GEN] share the loaf",
            "PersonX waters the garden",
            "alpha beta gamma",
        ]
    )


class TestWordSplitting:
    def test_whitespace_split_and_casefold(self):
        assert text_to_words("PersonX Bakes  BREAD") == ["personx", "bakes", "bread"]

    def test_delimiter_survives_as_single_token(self):
        assert text_to_words("a [GEN] b") == ["a", GEN_TOKEN, "b"]

    def test_empty_text(self):
        assert text_to_words("   ") == []


class TestVocab:
    def test_specials_take_first_five_ids(self, tokenizer):
        for index, token in enumerate(SPECIAL_TOKENS):
            assert tokenizer.vocab[token] == index
        assert (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, GEN_TOKEN) == SPECIAL_TOKENS

    def test_same_corpus_same_vocab(self):
        texts = ["b a", "a c a"]
        assert WordTokenizer.build(texts).vocab == WordTokenizer.build(texts).vocab

    def test_frequency_then_alphabetical_order(self):
        tok = WordTokenizer.build(["b a", "a c"])
        # "a" twice, then "b"/"c" once each in alphabetical order.
        assert tok.vocab["a"] < tok.vocab["b"] < tok.vocab["c"]

    def test_rejects_non_dense_ids(self):
        vocab = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
        vocab["word"] = 9
        with pytest.raises(ValueError, match="dense range"):
            WordTokenizer(vocab=vocab)

    def test_rejects_misplaced_specials(self):
        with pytest.raises(ValueError, match="<pad>"):
            WordTokenizer(vocab={"x": 0})


class TestEncodeDecode:
    def test_round_trip_in_vocab(self, tokenizer):
        text = "personx bakes sourdough bread"
        assert tokenizer.decode(tokenizer.encode(text)) == text

    def test_unknown_words_map_to_unk(self, tokenizer):
        ids = tokenizer.encode("bakes zzzunseen")
        assert ids[1] == tokenizer.unk_id

    def test_bos_eos_flags(self, tokenizer):
        ids = tokenizer.encode("alpha", add_bos=True, add_eos=True)
        assert ids[0] == tokenizer.bos_id
        assert ids[-1] == tokenizer.eos_id
        assert len(ids) == 3

    def test_max_len_truncates(self, tokenizer):
        ids = tokenizer.encode("alpha beta gamma", max_len=2)
        assert len(ids) == 2

    def test_delimiter_encodes_to_reserved_id(self, tokenizer):
        assert tokenizer.encode("alpha [GEN] beta")[1] == tokenizer.gen_id

    def test_decode_skips_structural_specials(self, tokenizer):
        ids = [tokenizer.bos_id, tokenizer.vocab["alpha"], tokenizer.eos_id]
        assert tokenizer.decode(ids) == "alpha"


class TestTokenCounts:
    def test_counts_specials_free(self, tokenizer):
        assert tokenizer.n_tokens("alpha beta gamma") == 3

    @pytest.mark.parametrize(
        ("left", "right"),
        [
            ("alpha", "beta"),
            ("PersonX bakes bread", "share the loaf"),
            ("a [GEN] b", "c d"),
        ],
    )
    def test_additive_over_whitespace_joins(self, tokenizer, left, right):
        joined = f"{left} {right}"
        assert tokenizer.n_tokens(joined) == tokenizer.n_tokens(left) + tokenizer.n_tokens(right)


class TestPersistence:
    def test_save_load_round_trip(self, tokenizer, tmp_path):
        path = tmp_path / "tokenizer.json"
        tokenizer.save(path)
        loaded = WordTokenizer.load(path)
        assert loaded.vocab == tokenizer.vocab
        assert loaded.encode("personx bakes") == tokenizer.encode("personx bakes")

    def test_load_rejects_non_object(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([1, 2, 3]), encoding="utf-8")
        with pytest.raises(ValueError, match="JSON object"):
            WordTokenizer.load(path)
