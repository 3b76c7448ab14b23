"""Generation pipeline: event loop, inference accounting, reproducibility."""

from __future__ import annotations

import pytest

from distilkg.client import CompletionClient, GenerationConfig
from distilkg.corpus import Relation
from distilkg.errors import ConfigError
from distilkg.pipeline import (
    GenerationPlan,
    RelationCounts,
    generate_events,
    generate_inferences,
    run_report,
)
from distilkg.prompts import load_seed_pool

from mock_endpoints import serve

EVENT_CONFIG = GenerationConfig(model="mock-lm", max_tokens=80)
INFER_CONFIG = GenerationConfig(model="mock-lm", max_tokens=24)


def make_plan(**overrides) -> GenerationPlan:
    defaults = dict(
        target_event_count=8,
        relations=tuple(Relation),
        inferences_per_input=3,
        event_config=EVENT_CONFIG,
        inference_config=INFER_CONFIG,
        rng_seed=13,
        created_at="2026-08-14T00:00:00+00:00",
    )
    defaults.update(overrides)
    return GenerationPlan(**defaults)


class TestGenerationPlan:
    def test_relations_canonicalized_and_deduped(self):
        plan = make_plan(relations=(Relation.XNEED, Relation.XATTR, Relation.XNEED))
        assert plan.relations == (Relation.XATTR, Relation.XNEED)

    def test_requires_relations(self):
        with pytest.raises(ConfigError, match="relation"):
            make_plan(relations=())

    def test_rejects_bad_counts(self):
        with pytest.raises(ConfigError):
            make_plan(target_event_count=-1)
        with pytest.raises(ConfigError):
            make_plan(inferences_per_input=0)

    def test_created_at_defaults_to_now(self):
        plan = make_plan(created_at="")
        assert plan.created_at  # stamped

    def test_relation_counts_balance(self):
        counts = RelationCounts(generated=10, kept=6, duplicate_dropped=2,
                                degenerate_dropped=1, parse_failed=1)
        assert counts.balanced()
        counts.kept -= 1
        assert not counts.balanced()


class TestGenerateEvents:
    def test_reaches_target_unique(self):
        plan = make_plan(target_event_count=12)
        with serve() as server:
            with CompletionClient(mode="live", base_url=server.base_url) as client:
                result = generate_events(plan, load_seed_pool(), client)
        assert len(result.events) == 12
        assert len({e.casefold() for e in result.events}) == 12
        assert all(e.startswith("PersonX ") for e in result.events)
        assert result.api_calls == result.batches * plan.event_batch_size
        assert result.raw_parsed >= len(result.events) + result.duplicates_dropped
        assert result.warning is None

    def test_zero_target_makes_no_calls(self):
        plan = make_plan(target_event_count=0)
        with CompletionClient(mode="fixture", fixture_dir="/unused") as client:
            result = generate_events(plan, load_seed_pool(), client)
        assert result.events == ()
        assert result.api_calls == 0
        assert result.batches == 0

    def test_batch_cap_stops_with_warning(self):
        def stuck(prompt, n):
            return [" PersonX repeats the same thing"] * n

        plan = make_plan(target_event_count=50, event_batch_cap=2)
        with serve(completion_fn=stuck) as server:
            with CompletionClient(mode="live", base_url=server.base_url) as client:
                result = generate_events(plan, load_seed_pool(), client)
        assert len(result.events) == 1
        assert result.batches == 2
        assert "batch cap 2 reached" in result.warning

    def test_deterministic_across_runs(self):
        plan = make_plan(target_event_count=10)
        with serve() as server:
            with CompletionClient(mode="live", base_url=server.base_url) as client:
                first = generate_events(plan, load_seed_pool(), client)
            with CompletionClient(mode="live", base_url=server.base_url) as client:
                second = generate_events(plan, load_seed_pool(), client)
        assert first.events == second.events

    def test_provenance_recorded(self):
        plan = make_plan(target_event_count=4)
        with serve() as server:
            with CompletionClient(mode="live", base_url=server.base_url) as client:
                result = generate_events(plan, load_seed_pool(), client)
        assert result.source_model == "mock-lm"
        assert result.generation_config_hash == EVENT_CONFIG.config_hash()
        assert result.created_at == plan.created_at


class TestGenerateInferences:
    EVENTS = ["PersonX plans a surprise party", "PersonX loses the spare keys"]

    def _run(self, plan, events=None, completion_fn=None, **server_kwargs):
        with serve(completion_fn=completion_fn, **server_kwargs) as server:
            with CompletionClient(mode="live", base_url=server.base_url) as client:
                return generate_inferences(events or self.EVENTS, plan, client)

    def test_accounting_identity_per_relation(self):
        plan = make_plan(inferences_per_input=5)
        result = self._run(plan)
        for relation, counts in result.per_relation.items():
            assert counts.balanced(), relation
            assert counts.generated == len(self.EVENTS) * plan.inferences_per_input
        assert len(result.corpus) == sum(c.kept for c in result.per_relation.values())

    def test_markers_restored_in_stored_triples(self):
        def namey(prompt, n):
            if prompt.rstrip().endswith(("intends", "wants", "has")):
                return [" to help Alex and Chris tidy up"] * n
            return [" grateful to Alex and Chris"] * n

        plan = make_plan(relations=(Relation.XWANT, Relation.XATTR), inferences_per_input=1)
        events = ["PersonX hosts PersonY for dinner"]

        # The target block always uses the seeded name draw, so find it first.
        from distilkg.prompts import assignment_for_event

        names = assignment_for_event(events[0], plan.rng_seed)

        def echo_names(prompt, n):
            if prompt.rstrip().endswith(("intends", "wants", "has")):
                return [f" to help {names.nameX} and {names.nameY} tidy up"] * n
            return [f" grateful to {names.nameX} and {names.nameY}"] * n

        result = self._run(plan, events=events, completion_fn=echo_names)
        tails = {t.relation: t.tail for t in result.corpus}
        assert tails[Relation.XWANT] == "help PersonX and PersonY tidy up"
        assert tails[Relation.XATTR] == "grateful to PersonX and PersonY"

    def test_duplicates_and_degenerates_counted(self):
        def repetitive(prompt, n):
            if prompt.rstrip().endswith(("intends", "wants", "has")):
                return [" to take a nap"] * (n - 1) + [" X."]
            return [" calm"] * (n - 1) + [" X."]

        plan = make_plan(relations=(Relation.XREACT,), inferences_per_input=4)
        result = self._run(plan, completion_fn=repetitive)
        counts = result.per_relation[Relation.XREACT]
        # per event: 3 identical "calm" -> 1 kept + 2 dups, plus 1 degenerate
        # "X"; the two events give distinct triples, so nothing crosses over
        assert counts.generated == 8
        assert counts.kept == 2
        assert counts.degenerate_dropped == 2
        assert counts.duplicate_dropped == 4
        assert counts.balanced()

    def test_parse_failures_counted(self):
        def unparseable(prompt, n):
            return [""] * n

        plan = make_plan(relations=(Relation.XATTR,), inferences_per_input=2)
        result = self._run(plan, completion_fn=unparseable)
        counts = result.per_relation[Relation.XATTR]
        assert counts.parse_failed == 4
        assert counts.kept == 0
        assert counts.balanced()

    def test_request_failures_recorded_and_run_continues(self):
        plan = make_plan(relations=(Relation.XATTR, Relation.XWANT), inferences_per_input=2)
        with serve(script=[500] * 100) as server:
            with CompletionClient(
                mode="live", base_url=server.base_url, max_retries=0,
                backoff_base=0.001,
            ) as client:
                result = generate_inferences(self.EVENTS, plan, client)
        assert len(result.failures) == len(self.EVENTS) * 2
        assert len(result.corpus) == 0
        for counts in result.per_relation.values():
            assert counts.generated == 0 and counts.balanced()

    def test_deterministic_and_ordered(self):
        plan = make_plan(inferences_per_input=2)
        a = self._run(plan)
        b = self._run(plan)
        assert list(a.corpus) == list(b.corpus)
        # corpus order follows events x canonical relation order
        first_event_entries = [t for t in a.corpus if t.event == self.EVENTS[0]]
        order = [t.relation for t in first_event_entries]
        assert order == sorted(order, key=list(Relation).index)

    def test_provenance_stamped(self):
        plan = make_plan(relations=(Relation.XREACT,), inferences_per_input=2)
        result = self._run(plan)
        for triple in result.corpus:
            assert triple.source_model == "mock-lm"
            assert triple.created_at == plan.created_at
            assert triple.critic_score is None


class TestRunReport:
    def test_combines_stages_and_totals(self):
        plan = make_plan(target_event_count=4, inferences_per_input=3)
        with serve() as server:
            with CompletionClient(mode="live", base_url=server.base_url) as client:
                events = generate_events(plan, load_seed_pool(), client)
                inferences = generate_inferences(list(events.events), plan, client)
        report = run_report(events, inferences)
        assert report["events"]["unique_events"] == 4
        totals = report["totals"]
        assert totals["generated"] == totals["kept"] + totals["duplicate_dropped"] + \
            totals["degenerate_dropped"] + totals["parse_failed"]
        assert set(report["relations"]) == {r.value for r in Relation}
        assert report["api_calls"] == events.api_calls + inferences.api_calls
        assert report["failures"] == []

    def test_empty_report_shape(self):
        report = run_report()
        assert report["events"]["unique_events"] == 0
        assert report["relations"] == {}
        assert report["api_calls"] == 0
