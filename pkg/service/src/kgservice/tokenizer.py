"""Word-level tokenizer shared by the critic and the language model.

Tokenization is plain whitespace splitting with case folding, which keeps two
properties the rest of the service relies on:

* the generation delimiter ``[GEN]`` always survives as a single token, so
  loss masking can find it by id;
* token counts are additive over whitespace-joined texts, so NLL totals
  reported per text can be reconciled against concatenations.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
GEN_TOKEN = "[GEN]"

SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, GEN_TOKEN)


def text_to_words(text: str) -> list[str]:
    """Split ``text`` into word tokens: whitespace split, case folded.

    The delimiter token is kept verbatim so it never collides with ordinary
    vocabulary even after folding.
    """

    words = []
    for raw in text.split():
        if raw == GEN_TOKEN:
            words.append(GEN_TOKEN)
        else:
            words.append(raw.casefold())
    return words


@dataclass(frozen=True)
class WordTokenizer:
    """Immutable word-to-id mapping with the five reserved specials first."""

    vocab: dict[str, int]

    def __post_init__(self) -> None:
        for index, token in enumerate(SPECIAL_TOKENS):
            if self.vocab.get(token) != index:
                raise ValueError(
                    f"tokenizer vocab must map {token!r} to {index}"
                )
        ids = sorted(self.vocab.values())
        if ids != list(range(len(self.vocab))):
            raise ValueError("tokenizer vocab ids must be a dense range from 0")

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "WordTokenizer":
        """Build a vocabulary from training texts.

        Words are ordered by descending frequency then alphabetically, after
        the reserved specials, so the same corpus always yields the same ids.
        """

        counts: Counter[str] = Counter()
        for text in texts:
            for word in text_to_words(text):
                if word not in SPECIAL_TOKENS:
                    counts[word] += 1
        vocab = {token: index for index, token in enumerate(SPECIAL_TOKENS)}
        ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        for word, count in ordered:
            if count >= min_count:
                vocab[word] = len(vocab)
        return cls(vocab=vocab)

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return self.vocab[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.vocab[UNK_TOKEN]

    @property
    def bos_id(self) -> int:
        return self.vocab[BOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.vocab[EOS_TOKEN]

    @property
    def gen_id(self) -> int:
        return self.vocab[GEN_TOKEN]

    def encode(
        self,
        text: str,
        *,
        add_bos: bool = False,
        add_eos: bool = False,
        max_len: int | None = None,
    ) -> list[int]:
        """Encode ``text`` to ids, mapping unknown words to ``<unk>``."""

        ids = [self.vocab.get(word, self.unk_id) for word in text_to_words(text)]
        if add_bos:
            ids = [self.bos_id] + ids
        if add_eos:
            ids = ids + [self.eos_id]
        if max_len is not None and len(ids) > max_len:
            ids = ids[:max_len]
        return ids

    def n_tokens(self, text: str) -> int:
        """Number of word tokens in ``text`` (specials not counted)."""

        return len(text_to_words(text))

    def decode(self, ids: Sequence[int], *, skip_special: bool = True) -> str:
        """Map ids back to a space-joined string."""

        inverse = {index: token for token, index in self.vocab.items()}
        words = []
        for token_id in ids:
            token = inverse.get(int(token_id), UNK_TOKEN)
            if skip_special and token in (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN):
                continue
            words.append(token)
        return " ".join(words)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.vocab, indent=2, sort_keys=False, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: tokenizer file must hold a JSON object")
        return cls(vocab={str(k): int(v) for k, v in raw.items()})
