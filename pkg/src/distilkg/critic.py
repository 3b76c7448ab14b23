"""Critic scoring, threshold filtering, and precision-recall evaluation.

Scoring is pluggable: a constant score, a remote HTTP critic, or an NLL
ranking (total or token-mean) converted to [0,1] by rank normalization so
every scorer shares the same orientation (higher = more acceptable). The
acceptance gate keeps triples with score >= t.

Metric conventions: average precision is the step sum over the ranking by
(descending score, triple_id); recall-at-precision enumerates threshold cuts
(ties kept together); precision curves cut at rank positions ceil(f * n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from pathlib import Path

from .analytics import render_for_scoring
from .client import ScorerClient
from .corpus import (
    Corpus,
    KnowledgeTriple,
    LabeledTriple,
    Verdict,
    atomic_write_text,
    dump_jsonl,
    iter_jsonl,
)
from .errors import ConfigError, DataError

__all__ = [
    "CriticScore",
    "ScorerBinding",
    "CurvePoint",
    "PrecisionCurve",
    "PRESET_KEPT_FRACTIONS",
    "score_corpus",
    "filter_at_threshold",
    "average_precision",
    "recall_at_precision",
    "precision_curve",
    "threshold_for_kept_fraction",
    "resolve_cutoff",
    "sweep_report",
    "load_scores",
    "save_scores",
]

# Kept-fraction targets behind the named cutoff presets.
PRESET_KEPT_FRACTIONS = {"critic_low": 0.68, "critic_high": 0.38}


@dataclass(frozen=True)
class CriticScore:
    triple_id: str
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DataError(
                f"critic score out of [0, 1] for triple {self.triple_id}: {self.score}"
            )


@dataclass(frozen=True)
class ScorerBinding:
    """Which critic to use: constant value, remote HTTP, or NLL ranking."""

    kind: str
    value: float | None = None
    url: str | None = None

    def __post_init__(self) -> None:
        kinds = ("constant", "remote_http", "nll_threshold", "token_mean_nll_threshold")
        if self.kind not in kinds:
            raise ConfigError(f"scorer kind must be one of {kinds}, got {self.kind!r}")
        if self.kind == "constant":
            if self.value is None or not 0.0 <= self.value <= 1.0:
                raise ConfigError(
                    f"constant scorer requires a value in [0, 1], got {self.value}"
                )


def _rank_normalized(ordering: list[tuple[float, str]]) -> dict[str, float]:
    """Map ids to 1 - rank/(n-1) over ascending (value, id); best value -> 1."""
    ordering = sorted(ordering)
    n = len(ordering)
    if n == 1:
        return {ordering[0][1]: 1.0}
    return {tid: 1.0 - index / (n - 1) for index, (_value, tid) in enumerate(ordering)}


def score_corpus(
    corpus: Corpus, binding: ScorerBinding, scorer: ScorerClient | None = None
) -> list[CriticScore]:
    """One score per triple, in corpus order."""
    triples = list(corpus)
    if binding.kind == "constant":
        return [CriticScore(t.id, binding.value) for t in triples]
    if scorer is None:
        raise ConfigError(f"scorer kind {binding.kind!r} requires a scorer client")
    if binding.kind == "remote_http":
        payload = [
            {"event": t.event, "relation": t.relation.value, "tail": t.tail} for t in triples
        ]
        raw = scorer.score_triples(payload)
        scores = []
        for triple, value in zip(triples, raw):
            if not 0.0 <= value <= 1.0:
                raise DataError(
                    f"remote scorer returned {value} outside [0, 1] for triple {triple.id}"
                )
            scores.append(CriticScore(triple.id, value))
        return scores
    # NLL kinds: rank by ascending NLL so the most likely triple scores 1.0.
    results = scorer.score_nll_many([render_for_scoring(t) for t in triples])
    if binding.kind == "nll_threshold":
        metric = [r.total_nll for r in results]
    else:
        metric = [r.mean_nll for r in results]
    by_id = _rank_normalized([(value, t.id) for value, t in zip(metric, triples)])
    return [CriticScore(t.id, by_id[t.id]) for t in triples]


def _score_map(scores: Iterable[CriticScore] | Mapping[str, float]) -> dict[str, float]:
    if isinstance(scores, Mapping):
        return dict(scores)
    return {s.triple_id: s.score for s in scores}


def filter_at_threshold(
    corpus: Corpus, scores: Iterable[CriticScore] | Mapping[str, float], t: float
) -> Corpus:
    """Keep triples with score >= t, order preserved, scores annotated."""
    by_id = _score_map(scores)
    kept: list[KnowledgeTriple] = []
    for triple in corpus:
        if triple.id not in by_id:
            raise DataError(f"missing critic score for triple {triple.id}")
        score = by_id[triple.id]
        if score >= t:
            kept.append(triple.with_score(score))
    return Corpus.from_entries(kept, source_path=corpus.source_path)


def _ranked_labeled(
    scores: Iterable[CriticScore] | Mapping[str, float], labels: Mapping[str, bool]
) -> tuple[list[tuple[float, str, bool]], int]:
    """Labeled items as (score, id, is_positive), ranked for evaluation."""
    if not labels:
        raise DataError("degenerate label set: no labeled items")
    by_id = _score_map(scores)
    items = []
    for triple_id, is_positive in labels.items():
        if triple_id not in by_id:
            raise DataError(f"missing critic score for triple {triple_id}")
        items.append((by_id[triple_id], triple_id, bool(is_positive)))
    items.sort(key=lambda item: (-item[0], item[1]))
    positives = sum(1 for item in items if item[2])
    if positives == 0 or positives == len(items):
        raise DataError("degenerate label set: need at least one accept and one reject")
    return items, positives


def average_precision(
    scores: Iterable[CriticScore] | Mapping[str, float], labels: Mapping[str, bool]
) -> float:
    """Step-sum AP over the ranking by (descending score, triple_id)."""
    items, positives = _ranked_labeled(scores, labels)
    precision_sum = 0.0
    true_positives = 0
    for rank, (_score, _tid, is_positive) in enumerate(items, start=1):
        if is_positive:
            true_positives += 1
            precision_sum += true_positives / rank
    return precision_sum / positives


def recall_at_precision(
    scores: Iterable[CriticScore] | Mapping[str, float],
    labels: Mapping[str, bool],
    target_precision: float = 0.8,
) -> float:
    """Maximum recall over threshold cuts with precision >= target; 0 if none.

    A threshold cut keeps every item scoring >= t, so tied scores enter
    together (unlike AP's per-item ranking).
    """
    items, positives = _ranked_labeled(scores, labels)
    best = 0.0
    true_positives = 0
    for rank, (score, _tid, is_positive) in enumerate(items, start=1):
        if is_positive:
            true_positives += 1
        if rank < len(items) and items[rank][0] == score:
            continue
        precision = true_positives / rank
        if precision >= target_precision:
            best = max(best, true_positives / positives)
    return best


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    kept_fraction: float
    precision: float
    kept_count: int


@dataclass(frozen=True)
class PrecisionCurve:
    points: tuple[CurvePoint, ...]

    def to_json(self) -> list[dict]:
        return [
            {
                "threshold": p.threshold,
                "kept_fraction": p.kept_fraction,
                "precision": p.precision,
                "kept_count": p.kept_count,
            }
            for p in self.points
        ]


def precision_curve(
    scores: Iterable[CriticScore] | Mapping[str, float],
    labels: Mapping[str, bool],
    grid: Sequence[float],
) -> PrecisionCurve:
    """Precision at rank cuts keeping ceil(f * n) labeled items per grid f."""
    if not grid:
        raise ConfigError("precision_curve requires a nonempty kept-fraction grid")
    for fraction in grid:
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"kept fractions must be in (0, 1], got {fraction}")
    items, _positives = _ranked_labeled(scores, labels)
    n = len(items)
    points = []
    for fraction in sorted(grid, reverse=True):
        kept_count = math.ceil(fraction * n)
        kept = items[:kept_count]
        precision = sum(1 for item in kept if item[2]) / kept_count
        points.append(
            CurvePoint(
                threshold=kept[-1][0],
                kept_fraction=fraction,
                precision=precision,
                kept_count=kept_count,
            )
        )
    return PrecisionCurve(points=tuple(points))


def threshold_for_kept_fraction(
    scores: Iterable[CriticScore] | Mapping[str, float], fraction: float
) -> float:
    """Rank-cut threshold so that >= ceil(fraction * n) items pass."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"kept fraction must be in (0, 1], got {fraction}")
    by_id = _score_map(scores)
    if not by_id:
        raise DataError("cannot resolve a threshold from an empty score set")
    ranked = sorted(by_id.items(), key=lambda kv: (-kv[1], kv[0]))
    kept_count = math.ceil(fraction * len(ranked))
    return ranked[kept_count - 1][1]


def resolve_cutoff(
    cutoff: float | str, scores: Iterable[CriticScore] | Mapping[str, float]
) -> float:
    """Accept a numeric cutoff or a named preset (critic_low / critic_high)."""
    if isinstance(cutoff, str):
        if cutoff not in PRESET_KEPT_FRACTIONS:
            raise ConfigError(
                f"unknown cutoff preset {cutoff!r}; known: {sorted(PRESET_KEPT_FRACTIONS)}"
            )
        return threshold_for_kept_fraction(scores, PRESET_KEPT_FRACTIONS[cutoff])
    return float(cutoff)


def sweep_report(
    corpus: Corpus,
    scores: Iterable[CriticScore] | Mapping[str, float],
    labeled_holdout: Sequence[LabeledTriple],
    cutoffs: Sequence[float | str],
    training_ids: Iterable[str] | None = None,
) -> dict:
    """Size and holdout precision at each cutoff, as a JSON-ready table.

    no_judgement holdout entries are excluded from precision but counted.
    When training_ids is given, any overlap with the holdout aborts.
    """
    by_id = _score_map(scores)
    holdout_ids = {item.triple.id for item in labeled_holdout}
    if training_ids is not None:
        overlap = holdout_ids & set(training_ids)
        if overlap:
            raise DataError(
                f"evaluation contamination: {len(overlap)} holdout ids appear in "
                f"training data (e.g. {sorted(overlap)[:3]})"
            )
    resolved = sorted((resolve_cutoff(c, by_id) for c in cutoffs))
    rows = []
    for cutoff in resolved:
        kept = filter_at_threshold(corpus, by_id, cutoff)
        kept_holdout = []
        for item in labeled_holdout:
            if item.triple.id not in by_id:
                raise DataError(f"missing critic score for triple {item.triple.id}")
            if by_id[item.triple.id] >= cutoff:
                kept_holdout.append(item)
        accepts = sum(1 for item in kept_holdout if item.verdict is Verdict.ACCEPT)
        rejects = sum(1 for item in kept_holdout if item.verdict is Verdict.REJECT)
        no_judgement = len(kept_holdout) - accepts - rejects
        judged = accepts + rejects
        rows.append(
            {
                "cutoff": cutoff,
                "size": len(kept),
                "kept_fraction": len(kept) / len(corpus) if len(corpus) else 0.0,
                "holdout_labeled": len(kept_holdout),
                "holdout_no_judgement": no_judgement,
                "precision": accepts / judged if judged else None,
            }
        )
    return {"corpus_size": len(corpus), "cutoffs": rows}


def load_scores(path: str | Path) -> list[CriticScore]:
    """Read scores JSONL ({"triple_id", "score"} per line)."""
    scores = []
    for lineno, record in iter_jsonl(path):
        try:
            scores.append(CriticScore(record["triple_id"], float(record["score"])))
        except KeyError as exc:
            raise DataError(f"{path}: line {lineno}: missing field {exc}") from None
        except (TypeError, ValueError):
            raise DataError(f"{path}: line {lineno}: score is not a number") from None
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    return scores


def save_scores(scores: Sequence[CriticScore], path: str | Path) -> None:
    records = ({"triple_id": s.triple_id, "score": s.score} for s in scores)
    atomic_write_text(path, dump_jsonl(records))
