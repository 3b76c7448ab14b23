"""Canonical data model for knowledge triples.

Defines the 7 causal relation kinds, the triple / label record types, text
normalization, degeneracy filtering, deduplication, human-label aggregation,
dataset splitting, and JSONL persistence. Everything here is immutable after
construction and safe to share across threads.

Corpus files are UTF-8 JSONL, one triple per line, with the fixed field
order: id, event, relation, tail, source_model, generation_config_hash,
created_at, critic_score (the last omitted when unset). Label files are
UTF-8 JSONL with fields triple_id, annotator_id, raw_option.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import string
import tempfile
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DataError

__all__ = [
    "Relation",
    "RawOption",
    "Verdict",
    "KnowledgeTriple",
    "HumanLabel",
    "LabeledTriple",
    "Corpus",
    "normalize_text",
    "validate_event",
    "is_degenerate",
    "triple_id",
    "dedup",
    "aggregate_labels",
    "split_labeled",
    "load_corpus",
    "atomic_write_text",
    "iter_jsonl",
    "dump_jsonl",
    "save_corpus",
    "load_labels",
    "save_labels",
    "load_labeled",
    "save_labeled",
]

PERSON_X = "PersonX"
PERSON_Y = "PersonY"


class Relation(Enum):
    """The 7 causal relation kinds, serialized by lowercase name."""

    XATTR = "xattr"
    XREACT = "xreact"
    XEFFECT = "xeffect"
    XINTENT = "xintent"
    XWANT = "xwant"
    XNEED = "xneed"
    HINDERED_BY = "hinderedby"

    @property
    def display_template(self) -> str:
        """Natural-language gloss used in reports and exported training lines."""
        return _DISPLAY_TEMPLATES[self]

    @classmethod
    def from_name(cls, name: str) -> "Relation":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise DataError(f"unknown relation name: {name!r}") from None


_DISPLAY_TEMPLATES = {
    Relation.XATTR: "how X is perceived after event",
    Relation.XREACT: "how X reacts in response to event",
    Relation.XEFFECT: "what X does after event",
    Relation.XINTENT: "X's intent in event",
    Relation.XWANT: "what X wants after event",
    Relation.XNEED: "what X needed for event",
    Relation.HINDERED_BY: "what might hinder event",
}

# Generic situations use marker names; real names only appear inside prompts.
Event = str


def normalize_text(raw: str) -> str:
    """Trim, collapse internal whitespace runs to single spaces, NFC-normalize.

    Total function; case is preserved and the empty string maps to itself.
    """
    return " ".join(unicodedata.normalize("NFC", raw).split())


def validate_event(text: str) -> str:
    """Normalize and validate an event string.

    Raises:
        DataError: if the text is empty after normalization or does not
            mention PersonX.
    """
    norm = normalize_text(text)
    if not norm:
        raise DataError("event text is empty")
    if PERSON_X not in norm:
        raise DataError(f"event does not mention {PERSON_X}: {norm!r}")
    return norm


def _is_marker_or_punct_only(text: str) -> bool:
    stripped = text.replace(PERSON_X, "").replace(PERSON_Y, "")
    stripped = stripped.translate(str.maketrans("", "", string.punctuation))
    return not stripped.strip()


def is_degenerate(tail: str) -> bool:
    """True for tails shorter than 3 characters or made only of generic
    markers and punctuation (vacuous completions)."""
    trimmed = tail.strip()
    if len(trimmed) < 3:
        return True
    return _is_marker_or_punct_only(trimmed)


def triple_id(event: str, relation: Relation, tail: str) -> str:
    """Deterministic content hash of (event, relation, tail).

    Lowercased, tab-joined, SHA-256, first 16 hex chars. Stable across runs
    so label files join against regenerated corpora.
    """
    key = f"{normalize_text(event)}\t{relation.value}\t{normalize_text(tail)}".lower()
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class KnowledgeTriple:
    """One event-relation-inference entry plus provenance."""

    id: str
    event: str
    relation: Relation
    tail: str
    source_model: str = ""
    generation_config_hash: str = ""
    created_at: str = ""
    critic_score: float | None = None

    def __post_init__(self) -> None:
        if self.critic_score is not None and not 0.0 <= self.critic_score <= 1.0:
            raise DataError(
                f"critic_score out of [0, 1] for triple {self.id}: {self.critic_score}"
            )

    @classmethod
    def create(
        cls,
        event: str,
        relation: Relation,
        tail: str,
        source_model: str = "",
        generation_config_hash: str = "",
        created_at: str = "",
        critic_score: float | None = None,
    ) -> "KnowledgeTriple":
        """Build a triple from raw texts, normalizing and hashing the id."""
        event = validate_event(event)
        tail = normalize_text(tail)
        if not tail:
            raise DataError("tail text is empty")
        return cls(
            id=triple_id(event, relation, tail),
            event=event,
            relation=relation,
            tail=tail,
            source_model=source_model,
            generation_config_hash=generation_config_hash,
            created_at=created_at,
            critic_score=critic_score,
        )

    def with_score(self, score: float) -> "KnowledgeTriple":
        return replace(self, critic_score=score)

    def to_json(self) -> dict:
        record = {
            "id": self.id,
            "event": self.event,
            "relation": self.relation.value,
            "tail": self.tail,
            "source_model": self.source_model,
            "generation_config_hash": self.generation_config_hash,
            "created_at": self.created_at,
        }
        if self.critic_score is not None:
            record["critic_score"] = self.critic_score
        return record

    @classmethod
    def from_json(cls, record: dict) -> "KnowledgeTriple":
        relation = Relation.from_name(record["relation"])
        return cls(
            id=record["id"],
            event=record["event"],
            relation=relation,
            tail=record["tail"],
            source_model=record.get("source_model", ""),
            generation_config_hash=record.get("generation_config_hash", ""),
            created_at=record.get("created_at", ""),
            critic_score=record.get("critic_score"),
        )


class RawOption(Enum):
    """Annotator choices from the rating task."""

    ALWAYS_OFTEN = "always_often"
    SOMETIMES_LIKELY = "sometimes_likely"
    FARFETCHED_NEVER = "farfetched_never"
    INVALID = "invalid"
    TOO_UNFAMILIAR = "too_unfamiliar"


class Verdict(Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    NO_JUDGEMENT = "no_judgement"


_OPTION_TO_VERDICT = {
    RawOption.ALWAYS_OFTEN: Verdict.ACCEPT,
    RawOption.SOMETIMES_LIKELY: Verdict.ACCEPT,
    RawOption.FARFETCHED_NEVER: Verdict.REJECT,
    RawOption.INVALID: Verdict.REJECT,
    RawOption.TOO_UNFAMILIAR: Verdict.NO_JUDGEMENT,
}


@dataclass(frozen=True)
class HumanLabel:
    triple_id: str
    annotator_id: str
    raw_option: RawOption

    @property
    def mapped_verdict(self) -> Verdict:
        return _OPTION_TO_VERDICT[self.raw_option]


@dataclass(frozen=True)
class LabeledTriple:
    """A triple with its aggregated human verdict."""

    triple: KnowledgeTriple
    verdict: Verdict
    n_annotators: int

    def __post_init__(self) -> None:
        if self.n_annotators < 1:
            raise DataError(f"n_annotators must be positive, got {self.n_annotators}")

    def to_json(self) -> dict:
        record = self.triple.to_json()
        record["verdict"] = self.verdict.value
        record["n_annotators"] = self.n_annotators
        return record

    @classmethod
    def from_json(cls, record: dict) -> "LabeledTriple":
        return cls(
            triple=KnowledgeTriple.from_json(record),
            verdict=Verdict(record["verdict"]),
            n_annotators=int(record["n_annotators"]),
        )


@dataclass(frozen=True)
class Corpus:
    """An ordered sequence of triples; iteration order equals file order."""

    entries: tuple[KnowledgeTriple, ...]
    source_path: Path | None = None

    def __iter__(self) -> Iterator[KnowledgeTriple]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_entries(
        cls, entries: Iterable[KnowledgeTriple], source_path: Path | None = None
    ) -> "Corpus":
        return cls(entries=tuple(entries), source_path=source_path)


def dedup(corpus: Corpus) -> Corpus:
    """Drop later duplicates of each (event, relation, tail) key.

    Keys are compared through the content-hash id, i.e. case-insensitively.
    First occurrence wins and survivor order is preserved, so the operation
    is idempotent.
    """
    seen: set[str] = set()
    kept = []
    for triple in corpus:
        if triple.id in seen:
            continue
        seen.add(triple.id)
        kept.append(triple)
    return Corpus.from_entries(kept, source_path=corpus.source_path)


def aggregate_labels(labels: Sequence[HumanLabel]) -> Verdict:
    """Collapse one triple's annotator labels into a single verdict.

    Any no-judgement vote wins outright; otherwise majority of accept vs
    reject, with exact ties resolved to reject.

    Raises:
        DataError: on an empty list or labels for different triples.
    """
    if not labels:
        raise DataError("no labels")
    ids = {label.triple_id for label in labels}
    if len(ids) > 1:
        raise DataError(f"inconsistent label group: {sorted(ids)}")
    verdicts = [label.mapped_verdict for label in labels]
    if Verdict.NO_JUDGEMENT in verdicts:
        return Verdict.NO_JUDGEMENT
    accepts = sum(1 for v in verdicts if v is Verdict.ACCEPT)
    rejects = len(verdicts) - accepts
    return Verdict.ACCEPT if accepts > rejects else Verdict.REJECT


def split_labeled(
    labeled: Sequence[LabeledTriple], seed: int
) -> tuple[list[LabeledTriple], list[LabeledTriple], list[LabeledTriple]]:
    """Seeded 80/10/10 split (sizes floor(0.8n), floor(0.1n), remainder).

    The same seed always yields the same partition; the three parts are
    disjoint and cover the input.
    """
    if len(labeled) < 10:
        raise DataError("too few labels to split")
    shuffled = list(labeled)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    n_train = int(0.8 * n)
    n_dev = int(0.1 * n)
    train = shuffled[:n_train]
    dev = shuffled[n_train : n_train + n_dev]
    test = shuffled[n_train + n_dev :]
    return train, dev, test


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, record) per nonblank line; errors carry line numbers."""
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise DataError(f"{path}: line {lineno}: expected an object")
            yield lineno, record


def dump_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def load_corpus(path: str | Path) -> Corpus:
    """Read a JSONL corpus; errors carry the offending line number."""
    path = Path(path)
    entries = []
    for lineno, record in iter_jsonl(path):
        try:
            entries.append(KnowledgeTriple.from_json(record))
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
        except KeyError as exc:
            raise DataError(f"{path}: line {lineno}: missing field {exc}") from None
    return Corpus.from_entries(entries, source_path=path)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write JSONL atomically (temp file + rename)."""
    atomic_write_text(Path(path), dump_jsonl(t.to_json() for t in corpus))


def load_labels(path: str | Path) -> list[HumanLabel]:
    path = Path(path)
    labels = []
    for lineno, record in iter_jsonl(path):
        try:
            labels.append(
                HumanLabel(
                    triple_id=record["triple_id"],
                    annotator_id=record["annotator_id"],
                    raw_option=RawOption(record["raw_option"]),
                )
            )
        except KeyError as exc:
            raise DataError(f"{path}: line {lineno}: missing field {exc}") from None
        except ValueError:
            raise DataError(
                f"{path}: line {lineno}: unknown raw_option {record.get('raw_option')!r}"
            ) from None
    return labels


def save_labels(labels: Sequence[HumanLabel], path: str | Path) -> None:
    records = (
        {"triple_id": l.triple_id, "annotator_id": l.annotator_id, "raw_option": l.raw_option.value}
        for l in labels
    )
    atomic_write_text(Path(path), dump_jsonl(records))


def load_labeled(path: str | Path) -> list[LabeledTriple]:
    path = Path(path)
    labeled = []
    for lineno, record in iter_jsonl(path):
        try:
            labeled.append(LabeledTriple.from_json(record))
        except (DataError, KeyError, ValueError) as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    return labeled


def save_labeled(labeled: Sequence[LabeledTriple], path: str | Path) -> None:
    atomic_write_text(Path(path), dump_jsonl(item.to_json() for item in labeled))
