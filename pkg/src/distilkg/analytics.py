"""Corpus measurement: lexical stats, BLEU-2 soft-uniqueness, entropy.

The tokenizer is pinned (lowercase, strip punctuation characters, split on
whitespace) and shared by the lexical stats and BLEU-2 so reported numbers
are reproducible. Entropy estimates are mean total NLL per example converted
to bits; KL is the cross-entropy minus self-entropy identity on a shared
sample and text rendering.
"""

from __future__ import annotations

import math
import string
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .client import ScorerClient
from .corpus import Corpus, KnowledgeTriple, Relation
from .errors import DataError

__all__ = [
    "tokenize",
    "render_for_scoring",
    "RelationStats",
    "LexicalStats",
    "EntropyReport",
    "lexical_stats",
    "bleu2",
    "soft_unique_subset",
    "softly_unique_size",
    "estimate_entropy",
    "kl_divergence",
    "entropy_report",
    "analytics_report",
]

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Pinned tokenizer: lowercase, drop punctuation chars, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def render_for_scoring(triple: KnowledgeTriple) -> str:
    """Pinned text rendering for every NLL/entropy call over a triple."""
    return f"{triple.event} {triple.relation.display_template} {triple.tail}"


@dataclass(frozen=True)
class RelationStats:
    n_tails: int
    avg_tail_length_tokens: float
    unique_tokens: int
    unique_tails: int


@dataclass(frozen=True)
class EventStats:
    n_events: int
    avg_length_tokens: float
    unique_tokens: int


@dataclass(frozen=True)
class LexicalStats:
    relations: dict[Relation, RelationStats]
    events: EventStats

    def to_json(self) -> dict:
        return {
            "relations": {
                rel.value: {
                    "n_tails": s.n_tails,
                    "avg_tail_length_tokens": s.avg_tail_length_tokens,
                    "unique_tokens": s.unique_tokens,
                    "unique_tails": s.unique_tails,
                }
                for rel, s in self.relations.items()
            },
            "events": {
                "n_events": self.events.n_events,
                "avg_length_tokens": self.events.avg_length_tokens,
                "unique_tokens": self.events.unique_tokens,
            },
        }


def lexical_stats(corpus: Corpus) -> LexicalStats:
    """Per-relation tail stats plus a distinct-event row; order-invariant."""
    relations = {}
    for relation in Relation:
        tails = [t.tail for t in corpus if t.relation is relation]
        tokens_per_tail = [tokenize(tail) for tail in tails]
        vocabulary = {token for tokens in tokens_per_tail for token in tokens}
        relations[relation] = RelationStats(
            n_tails=len(tails),
            avg_tail_length_tokens=(
                sum(len(tokens) for tokens in tokens_per_tail) / len(tails) if tails else 0.0
            ),
            unique_tokens=len(vocabulary),
            unique_tails=len({tail.casefold() for tail in tails}),
        )
    events = sorted({t.event for t in corpus})
    event_tokens = [tokenize(event) for event in events]
    event_vocabulary = {token for tokens in event_tokens for token in tokens}
    return LexicalStats(
        relations=relations,
        events=EventStats(
            n_events=len(events),
            avg_length_tokens=(
                sum(len(tokens) for tokens in event_tokens) / len(events) if events else 0.0
            ),
            unique_tokens=len(event_vocabulary),
        ),
    )


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def bleu2(candidate: str, references: Iterable[str]) -> float:
    """BLEU-2 against a multi-reference set: geometric mean of modified 1/2-gram
    precisions times the brevity penalty (closest reference length, ties to
    the shorter). No smoothing: any zero precision gives 0. Candidates under
    2 tokens are scored on 1-gram precision alone.
    """
    references = list(references)
    if not references:
        raise DataError("bleu2 requires a nonempty reference set")
    candidate_tokens = tokenize(candidate)
    if not candidate_tokens:
        return 0.0
    reference_tokens = [tokenize(r) for r in references]
    c = len(candidate_tokens)
    r = min((abs(len(ref) - c), len(ref)) for ref in reference_tokens)[1]
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    orders = (1, 2) if c >= 2 else (1,)
    log_precision = 0.0
    for order in orders:
        counts = _ngram_counts(candidate_tokens, order)
        max_reference: Counter = Counter()
        for ref in reference_tokens:
            for gram, count in _ngram_counts(ref, order).items():
                max_reference[gram] = max(max_reference[gram], count)
        clipped = sum(min(count, max_reference[gram]) for gram, count in counts.items())
        total = sum(counts.values())
        if clipped == 0:
            return 0.0
        log_precision += math.log(clipped / total) / len(orders)
    return brevity * math.exp(log_precision)


SOFT_UNIQUE_THRESHOLD = 0.5


def soft_unique_subset(tails: Sequence[str]) -> list[str]:
    """Greedily remove the member most similar to the rest until every member
    has BLEU-2 < 0.5 against the others. Ties remove the lexicographically
    greatest string (then the later occurrence). Deterministic; singletons
    pass trivially.
    """
    members = list(tails)
    while len(members) > 1:
        scored = []
        for index, tail in enumerate(members):
            others = members[:index] + members[index + 1 :]
            scored.append((bleu2(tail, set(others)), tail, index))
        score, _tail, index = max(scored)
        if score < SOFT_UNIQUE_THRESHOLD:
            break
        members.pop(index)
    return members


def softly_unique_size(corpus: Corpus) -> int:
    """Sum of soft-unique subset sizes over (event, relation) groups."""
    groups: dict[tuple[str, Relation], list[str]] = {}
    for triple in corpus:
        groups.setdefault((triple.event, triple.relation), []).append(triple.tail)
    return sum(len(soft_unique_subset(tails)) for tails in groups.values())


def estimate_entropy(sample: Sequence[KnowledgeTriple], scorer: ScorerClient) -> float:
    """Mean total NLL over the sample, in bits per example."""
    if not sample:
        raise DataError("cannot estimate entropy from an empty sample")
    results = scorer.score_nll_many([render_for_scoring(t) for t in sample])
    return sum(r.total_nll for r in results) / len(results) / math.log(2)


def kl_divergence(h_self: float, h_cross: float) -> float:
    """KL estimate from entropy estimates on a shared sample: h_cross - h_self.

    Finite-sample estimates can go negative; that is reported as-is with a
    warning rather than clamped.
    """
    kl = h_cross - h_self
    if kl < 0:
        warnings.warn(
            f"negative KL estimate ({kl:.4f} bits/example); finite-sample noise "
            "or mismatched scorers",
            stacklevel=2,
        )
    return kl


@dataclass(frozen=True)
class EntropyReport:
    """Entropy/cross-entropy/KL for one sample, in bits per example."""

    h_self: float
    h_cross: float
    kl: float
    sample_size: int
    self_scorer: str
    cross_scorer: str

    def __post_init__(self) -> None:
        if self.kl != self.h_cross - self.h_self:
            raise DataError("entropy report violates kl = h_cross - h_self")

    def to_json(self) -> dict:
        return {
            "h_self": self.h_self,
            "h_cross": self.h_cross,
            "kl": self.kl,
            "sample_size": self.sample_size,
            "self_scorer": self.self_scorer,
            "cross_scorer": self.cross_scorer,
            "units": "bits_per_example",
        }


def entropy_report(
    sample: Sequence[KnowledgeTriple],
    self_scorer: ScorerClient,
    cross_scorer: ScorerClient,
    self_scorer_id: str = "self",
    cross_scorer_id: str = "cross",
) -> EntropyReport:
    h_self = estimate_entropy(sample, self_scorer)
    h_cross = estimate_entropy(sample, cross_scorer)
    return EntropyReport(
        h_self=h_self,
        h_cross=h_cross,
        kl=kl_divergence(h_self, h_cross),
        sample_size=len(sample),
        self_scorer=self_scorer_id,
        cross_scorer=cross_scorer_id,
    )


def analytics_report(corpus: Corpus, entropy: EntropyReport | None = None) -> dict:
    """JSON-ready report: size, per-relation lexical rows, soft-unique size."""
    return {
        "size": len(corpus),
        "lexical": lexical_stats(corpus).to_json(),
        "softly_unique_size": softly_unique_size(corpus),
        "entropy": entropy.to_json() if entropy is not None else None,
    }
