"""Ranking metrics for critic evaluation.

These reimplement the shared metric contract locally (the service must not
import the toolkit): items are ranked by descending score with ties broken by
triple id, average precision is the step sum over that ranking divided once
by the number of positives, and recall at a precision target scans threshold
cuts where tied scores enter together.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence


def _ranked(
    scores: Mapping[str, float], labels: Mapping[str, bool]
) -> tuple[list[tuple[float, str, bool]], int]:
    if not labels:
        raise ValueError("no labeled items to evaluate")
    items = []
    for triple_id, is_positive in labels.items():
        if triple_id not in scores:
            raise ValueError(f"missing score for labeled triple {triple_id}")
        items.append((scores[triple_id], triple_id, bool(is_positive)))
    items.sort(key=lambda item: (-item[0], item[1]))
    positives = sum(1 for item in items if item[2])
    if positives == 0 or positives == len(items):
        raise ValueError("need at least one positive and one negative label")
    return items, positives


def average_precision(scores: Mapping[str, float], labels: Mapping[str, bool]) -> float:
    items, positives = _ranked(scores, labels)
    precision_sum = 0.0
    true_positives = 0
    for rank, (_score, _tid, is_positive) in enumerate(items, start=1):
        if is_positive:
            true_positives += 1
            precision_sum += true_positives / rank
    return precision_sum / positives


def recall_at_precision(
    scores: Mapping[str, float],
    labels: Mapping[str, bool],
    target_precision: float = 0.8,
) -> float:
    items, positives = _ranked(scores, labels)
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


def precision_curve(
    scores: Mapping[str, float],
    labels: Mapping[str, bool],
    grid: Sequence[float] = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1),
) -> list[dict]:
    """Precision at rank cuts keeping ``ceil(f * n)`` items per grid fraction."""

    items, _positives = _ranked(scores, labels)
    n = len(items)
    points = []
    for fraction in sorted(grid, reverse=True):
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"kept fractions must be in (0, 1], got {fraction}")
        kept_count = math.ceil(fraction * n)
        kept = items[:kept_count]
        points.append(
            {
                "threshold": kept[-1][0],
                "kept_fraction": fraction,
                "precision": sum(1 for item in kept if item[2]) / kept_count,
                "kept_count": kept_count,
            }
        )
    return points
