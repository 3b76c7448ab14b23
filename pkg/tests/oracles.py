"""Independent brute-force re-implementations of the evaluation metrics.

These deliberately avoid the library's code paths and incremental tricks:
quadratic prefix recounts, explicit threshold enumeration, list-based n-gram
counting. Unit and acceptance tests compare library outputs against these.
"""

from __future__ import annotations

import math


def ranked_ids(scores: dict[str, float], labels: dict[str, bool]) -> list[str]:
    return sorted(labels, key=lambda tid: (-scores[tid], tid))


def ap_oracle(scores: dict[str, float], labels: dict[str, bool]) -> float:
    """Mean precision over prefixes ending at each positive, recounted fresh."""
    ranking = ranked_ids(scores, labels)
    positives = [tid for tid in ranking if labels[tid]]
    total = 0.0
    for tid in positives:
        prefix = ranking[: ranking.index(tid) + 1]
        total += sum(1 for u in prefix if labels[u]) / len(prefix)
    return total / len(positives)


def recall_at_precision_oracle(
    scores: dict[str, float], labels: dict[str, bool], target: float
) -> float:
    """Enumerate every distinct score as a threshold; keep is score >= t."""
    n_pos = sum(1 for tid in labels if labels[tid])
    best = 0.0
    for t in {scores[tid] for tid in labels}:
        kept = [tid for tid in labels if scores[tid] >= t]
        tp = sum(1 for tid in kept if labels[tid])
        if tp / len(kept) >= target:
            best = max(best, tp / n_pos)
    return best


def precision_curve_oracle(
    scores: dict[str, float], labels: dict[str, bool], grid: list[float]
) -> list[tuple[float, float, float, int]]:
    """(threshold, kept_fraction, precision, kept_count) per grid fraction."""
    ranking = ranked_ids(scores, labels)
    rows = []
    for fraction in sorted(grid, reverse=True):
        kept_count = math.ceil(fraction * len(ranking))
        kept = ranking[:kept_count]
        precision = sum(1 for tid in kept if labels[tid]) / kept_count
        rows.append((scores[kept[-1]], fraction, precision, kept_count))
    return rows


def _grams(tokens: list[str], order: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)]


def bleu2_oracle(candidate_tokens: list[str], reference_tokens: list[list[str]]) -> float:
    """List-count BLEU-2: modified precision via explicit per-gram min/max."""
    c = len(candidate_tokens)
    if c == 0:
        return 0.0
    best = None
    for ref in reference_tokens:
        entry = (abs(len(ref) - c), len(ref))
        if best is None or entry < best:
            best = entry
    r = best[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    precisions = []
    for order in [1, 2] if c >= 2 else [1]:
        cand_grams = _grams(candidate_tokens, order)
        ref_gram_lists = [_grams(ref, order) for ref in reference_tokens]
        clipped = 0
        for gram in set(cand_grams):
            limit = max(ref_grams.count(gram) for ref_grams in ref_gram_lists)
            clipped += min(cand_grams.count(gram), limit)
        precisions.append(clipped / len(cand_grams))
    if any(p == 0.0 for p in precisions):
        return 0.0
    product = 1.0
    for p in precisions:
        product *= p
    return bp * product ** (1.0 / len(precisions))


def soft_unique_oracle(tails: list[str], bleu2, threshold: float = 0.5) -> list[str]:
    """Re-derive the greedy removal: max score, then max string, then max index."""
    members = list(tails)
    while len(members) > 1:
        scores = [bleu2(t, set(members[:i] + members[i + 1 :])) for i, t in enumerate(members)]
        top = max(scores)
        if top < threshold:
            break
        candidates = [i for i, s in enumerate(scores) if s == top]
        top_string = max(members[i] for i in candidates)
        victim = max(i for i in candidates if members[i] == top_string)
        del members[victim]
    return members
