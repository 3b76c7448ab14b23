"""Generation pipeline: events to a target unique count, then inferences.

Event generation loops small batches of freshly seeded prompts, deduplicating
case-insensitively until the target count (or a batch cap) is reached.
Inference generation walks events x relations in deterministic order, parses
and normalizes each sample, restores generic markers, then applies degeneracy
filtering and corpus-wide dedup. Per-sample accounting satisfies
generated = kept + duplicate_dropped + degenerate_dropped + parse_failed
for every relation. With fixtures and a fixed seed, runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .client import CompletionClient, GenerationConfig
from .corpus import Corpus, Event, KnowledgeTriple, Relation, is_degenerate
from .errors import ConfigError, DataError, ServiceError
from .prompts import (
    SeedPool,
    assignment_for_event,
    parse_event_completion,
    parse_inference_completion,
    render_event_prompt,
    render_inference_prompt,
    restore_markers,
    sample_seed_events,
    template_for,
)

__all__ = [
    "GenerationPlan",
    "RelationCounts",
    "EventGenerationResult",
    "InferenceGenerationResult",
    "generate_events",
    "generate_inferences",
    "run_report",
]


def _derive_seed(*parts: object) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class GenerationPlan:
    """Targets, sampling configs, and seed for one generation run.

    created_at is stamped into every triple's provenance; pin it in config to
    make recorded runs byte-reproducible on replay.
    """

    target_event_count: int
    relations: tuple[Relation, ...]
    inferences_per_input: int
    event_config: GenerationConfig
    inference_config: GenerationConfig
    rng_seed: int
    created_at: str = ""
    event_batch_size: int = 5
    event_batch_cap: int = 50
    shuffle_inference_examples: bool = False

    def __post_init__(self) -> None:
        if self.target_event_count < 0:
            raise ConfigError(f"target_event_count must be >= 0, got {self.target_event_count}")
        if self.inferences_per_input < 1:
            raise ConfigError(
                f"inferences_per_input must be >= 1, got {self.inferences_per_input}"
            )
        relations = tuple(dict.fromkeys(self.relations))
        if not relations:
            raise ConfigError("plan requires at least one relation")
        canonical = tuple(sorted(relations, key=list(Relation).index))
        object.__setattr__(self, "relations", canonical)
        if self.event_batch_size < 1:
            raise ConfigError(f"event_batch_size must be >= 1, got {self.event_batch_size}")
        if self.event_batch_cap < 1:
            raise ConfigError(f"event_batch_cap must be >= 1, got {self.event_batch_cap}")
        if not self.created_at:
            object.__setattr__(self, "created_at", _utc_now())


@dataclass
class RelationCounts:
    generated: int = 0
    kept: int = 0
    duplicate_dropped: int = 0
    degenerate_dropped: int = 0
    parse_failed: int = 0

    def balanced(self) -> bool:
        return self.generated == (
            self.kept + self.duplicate_dropped + self.degenerate_dropped + self.parse_failed
        )


@dataclass(frozen=True)
class EventGenerationResult:
    events: tuple[Event, ...]
    source_model: str
    generation_config_hash: str
    created_at: str
    api_calls: int
    batches: int
    raw_parsed: int
    duplicates_dropped: int
    elapsed_seconds: float
    warning: str | None = None


@dataclass(frozen=True)
class InferenceGenerationResult:
    corpus: Corpus
    per_relation: dict[Relation, RelationCounts]
    api_calls: int
    failures: tuple[str, ...]
    elapsed_seconds: float


def generate_events(
    plan: GenerationPlan,
    pool: SeedPool,
    client: CompletionClient,
    templates_dir: str | Path | None = None,
) -> EventGenerationResult:
    """Collect target_event_count unique events from batched prompts.

    Each batch renders event_batch_size prompts over freshly sampled seed
    events. Stops early with a warning when the batch cap is hit; client
    errors propagate after the client's own retries.
    """
    template = template_for(None, templates_dir)
    start = time.monotonic()
    calls_before = client.api_calls
    collected: dict[str, Event] = {}
    raw_parsed = 0
    duplicates = 0
    batches = 0
    warning = None
    while len(collected) < plan.target_event_count:
        if batches >= plan.event_batch_cap:
            warning = (
                f"event batch cap {plan.event_batch_cap} reached with "
                f"{len(collected)} of {plan.target_event_count} unique events"
            )
            break
        prompts = []
        for slot in range(plan.event_batch_size):
            sample_seed = _derive_seed(plan.rng_seed, "events", batches, slot)
            seeds = sample_seed_events(pool, template.n_examples, sample_seed)
            prompts.append(render_event_prompt(seeds, None, template))
        for results in client.complete_many(prompts, plan.event_config):
            for result in results:
                for event in parse_event_completion(result.text):
                    raw_parsed += 1
                    key = event.casefold()
                    if key in collected:
                        duplicates += 1
                    else:
                        collected[key] = event
        batches += 1
    events = tuple(list(collected.values())[: plan.target_event_count])
    return EventGenerationResult(
        events=events,
        source_model=plan.event_config.model,
        generation_config_hash=plan.event_config.config_hash(),
        created_at=plan.created_at,
        api_calls=client.api_calls - calls_before,
        batches=batches,
        raw_parsed=raw_parsed,
        duplicates_dropped=duplicates,
        elapsed_seconds=time.monotonic() - start,
        warning=warning,
    )


def _settled_completions(
    client: CompletionClient, prompts: Sequence[str], config: GenerationConfig
) -> list[list | Exception]:
    """complete() every prompt, capturing per-prompt errors in place."""

    def one(prompt: str) -> list | Exception:
        try:
            return client.complete(prompt, config)
        except (ServiceError, DataError) as exc:
            return exc

    if not prompts:
        return []
    workers = min(client.max_in_flight, len(prompts))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, prompts))


def generate_inferences(
    events: Sequence[Event],
    plan: GenerationPlan,
    client: CompletionClient,
    templates_dir: str | Path | None = None,
) -> InferenceGenerationResult:
    """Generate inferences_per_input tails per (event, relation) pair.

    Names are assigned deterministically per event from the plan seed.
    Per-input request failures are recorded and skipped; the run continues.
    """
    start = time.monotonic()
    calls_before = client.api_calls
    config = replace(plan.inference_config, n=plan.inferences_per_input)
    config_hash = config.config_hash()
    templates = {rel: template_for(rel, templates_dir) for rel in plan.relations}

    tasks = []
    for event in events:
        names = assignment_for_event(event, plan.rng_seed)
        for relation in plan.relations:
            template = templates[relation]
            examples = list(template.examples)
            if plan.shuffle_inference_examples:
                shuffle_seed = _derive_seed(plan.rng_seed, "examples", event, relation.value)
                random.Random(shuffle_seed).shuffle(examples)
            prompt = render_inference_prompt(relation, event, examples, names, template)
            tasks.append((event, relation, names, prompt))

    settled = _settled_completions(client, [t[3] for t in tasks], config)

    per_relation = {rel: RelationCounts() for rel in plan.relations}
    entries: list[KnowledgeTriple] = []
    seen_ids: set[str] = set()
    failures: list[str] = []
    for (event, relation, names, _prompt), outcome in zip(tasks, settled):
        counts = per_relation[relation]
        if isinstance(outcome, Exception):
            failures.append(f"{relation.value} for event {event!r}: {outcome}")
            continue
        for result in outcome:
            counts.generated += 1
            tail = parse_inference_completion(relation, result.text, templates[relation])
            if tail is None:
                counts.parse_failed += 1
                continue
            tail = restore_markers(tail, names)
            try:
                triple = KnowledgeTriple.create(
                    event=event,
                    relation=relation,
                    tail=tail,
                    source_model=config.model,
                    generation_config_hash=config_hash,
                    created_at=plan.created_at,
                )
            except DataError:
                counts.parse_failed += 1
                continue
            if is_degenerate(triple.tail):
                counts.degenerate_dropped += 1
                continue
            if triple.id in seen_ids:
                counts.duplicate_dropped += 1
                continue
            seen_ids.add(triple.id)
            counts.kept += 1
            entries.append(triple)
    return InferenceGenerationResult(
        corpus=Corpus.from_entries(entries),
        per_relation=per_relation,
        api_calls=client.api_calls - calls_before,
        failures=tuple(failures),
        elapsed_seconds=time.monotonic() - start,
    )


def run_report(
    event_result: EventGenerationResult | None = None,
    inference_result: InferenceGenerationResult | None = None,
) -> dict:
    """JSON-ready run summary with per-relation accounting."""
    report: dict = {
        "events": {
            "unique_events": 0,
            "raw_parsed": 0,
            "duplicates_dropped": 0,
            "api_calls": 0,
            "batches": 0,
        },
        "relations": {},
        "totals": {
            "generated": 0,
            "kept": 0,
            "duplicate_dropped": 0,
            "degenerate_dropped": 0,
            "parse_failed": 0,
        },
        "api_calls": 0,
        "wall_clock_seconds": 0.0,
        "warnings": [],
        "failures": [],
    }
    if event_result is not None:
        report["events"] = {
            "unique_events": len(event_result.events),
            "raw_parsed": event_result.raw_parsed,
            "duplicates_dropped": event_result.duplicates_dropped,
            "api_calls": event_result.api_calls,
            "batches": event_result.batches,
        }
        report["api_calls"] += event_result.api_calls
        report["wall_clock_seconds"] += event_result.elapsed_seconds
        if event_result.warning:
            report["warnings"].append(event_result.warning)
    if inference_result is not None:
        for relation, counts in inference_result.per_relation.items():
            report["relations"][relation.value] = {
                "generated": counts.generated,
                "kept": counts.kept,
                "duplicate_dropped": counts.duplicate_dropped,
                "degenerate_dropped": counts.degenerate_dropped,
                "parse_failed": counts.parse_failed,
            }
            for key in report["totals"]:
                report["totals"][key] += getattr(counts, key)
        report["api_calls"] += inference_result.api_calls
        report["wall_clock_seconds"] += inference_result.elapsed_seconds
        report["failures"] = list(inference_result.failures)
    return report
