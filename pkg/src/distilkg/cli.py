"""Command-line entry point wiring the pipeline stages.

Subcommands: generate-events, generate-inferences, labels aggregate, labels
split, score, filter, sweep, eval-critic, analyze, export. A JSON run config
(--config) provides endpoint settings, the generation plan, and scorer
bindings; per-subcommand flags name the input/output files.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 remote
service error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import analytics as analytics_mod
from . import critic as critic_mod
from . import pipeline as pipeline_mod
from .client import CompletionClient, GenerationConfig, ScorerClient
from .corpus import (
    Corpus,
    HumanLabel,
    LabeledTriple,
    Relation,
    Verdict,
    aggregate_labels,
    atomic_write_text,
    load_corpus,
    load_labeled,
    load_labels,
    save_corpus,
    save_labeled,
    split_labeled,
    validate_event,
)
from .errors import ConfigError, DataError, DistilkgError, ServiceError
from .prompts import SeedPool, load_seed_pool
from .critic import ScorerBinding

__all__ = ["main", "RunConfig", "load_run_config"]


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration; builders construct clients and the plan."""

    raw: dict
    path: Path

    def _section(self, key: str) -> dict:
        value = self.raw.get(key)
        if value is None:
            raise ConfigError(f"{self.path}: config section {key!r} is required here")
        if not isinstance(value, dict):
            raise ConfigError(f"{self.path}: config section {key!r} must be an object")
        return value

    def _client_kwargs(self, section: dict) -> dict:
        known = (
            "mode",
            "base_url",
            "fixture_dir",
            "credential_env",
            "max_in_flight",
            "max_retries",
            "backoff_base",
            "backoff_cap",
            "requests_per_minute",
            "timeout",
        )
        unknown = set(section) - set(known) - {"batch_size"}
        if unknown:
            raise ConfigError(f"{self.path}: unknown endpoint settings {sorted(unknown)}")
        kwargs = {k: section[k] for k in known if k in section}
        fixture_dir = kwargs.get("fixture_dir")
        if fixture_dir is not None:
            kwargs["fixture_dir"] = self.path.parent / fixture_dir
        return kwargs

    def build_completion_client(self) -> CompletionClient:
        return CompletionClient(**self._client_kwargs(self._section("endpoint")))

    def build_scorer_client(self) -> ScorerClient:
        section = self._section("scorer_endpoint")
        kwargs = self._client_kwargs(section)
        if "batch_size" in section:
            kwargs["batch_size"] = section["batch_size"]
        return ScorerClient(**kwargs)

    def has_scorer_endpoint(self, key: str = "scorer_endpoint") -> bool:
        return isinstance(self.raw.get(key), dict)

    def build_named_scorer_client(self, key: str) -> ScorerClient:
        section = self._section(key)
        kwargs = self._client_kwargs(section)
        if "batch_size" in section:
            kwargs["batch_size"] = section["batch_size"]
        return ScorerClient(**kwargs)

    def scorer_binding(self) -> ScorerBinding:
        section = self._section("scorer")
        try:
            return ScorerBinding(
                kind=section.get("kind", ""),
                value=section.get("value"),
                url=section.get("url"),
            )
        except ConfigError as exc:
            raise ConfigError(f"{self.path}: {exc}") from None

    def _generation_config(self, section: dict, label: str) -> GenerationConfig:
        known = (
            "model",
            "max_tokens",
            "top_p",
            "temperature",
            "n",
            "stop",
            "presence_penalty",
            "frequency_penalty",
        )
        unknown = set(section) - set(known)
        if unknown:
            raise ConfigError(f"{self.path}: unknown {label} settings {sorted(unknown)}")
        kwargs = dict(section)
        if "stop" in kwargs:
            kwargs["stop"] = tuple(kwargs["stop"])
        try:
            return GenerationConfig(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"{self.path}: invalid {label}: {exc}") from None

    def build_plan(self) -> pipeline_mod.GenerationPlan:
        section = self._section("plan")
        raw_relations = section.get("relations", "all")
        if raw_relations == "all":
            relations = tuple(Relation)
        else:
            try:
                relations = tuple(Relation.from_name(name) for name in raw_relations)
            except DataError as exc:
                raise ConfigError(f"{self.path}: {exc}") from None
        try:
            return pipeline_mod.GenerationPlan(
                target_event_count=section["target_event_count"],
                relations=relations,
                inferences_per_input=section.get("inferences_per_input", 10),
                event_config=self._generation_config(
                    section["event_config"], "event_config"
                ),
                inference_config=self._generation_config(
                    section["inference_config"], "inference_config"
                ),
                rng_seed=section.get("rng_seed", self.raw.get("rng_seed", 0)),
                created_at=section.get("created_at", ""),
                event_batch_size=section.get("event_batch_size", 5),
                event_batch_cap=section.get("event_batch_cap", 50),
                shuffle_inference_examples=section.get("shuffle_inference_examples", False),
            )
        except KeyError as exc:
            raise ConfigError(f"{self.path}: plan is missing {exc}") from None

    def seed_pool(self) -> SeedPool:
        paths = self.raw.get("paths", {})
        seed_path = paths.get("seed_pool")
        if seed_path is None:
            return load_seed_pool()
        return load_seed_pool(self.path.parent / seed_path)

    def templates_dir(self) -> Path | None:
        paths = self.raw.get("paths", {})
        templates = paths.get("templates_dir")
        return self.path.parent / templates if templates else None

    def rng_seed(self) -> int:
        plan = self.raw.get("plan", {})
        return plan.get("rng_seed", self.raw.get("rng_seed", 0))


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return RunConfig(raw=raw, path=path)


def _require_config(args: argparse.Namespace) -> RunConfig:
    if not args.config:
        raise ConfigError("this subcommand requires --config")
    return load_run_config(args.config)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _load_events_file(path: str | Path) -> list[str]:
    events = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            events.append(validate_event(line))
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    return events


def _save_events_file(events: Sequence[str], path: str | Path) -> None:
    atomic_write_text(path, "".join(f"{event}\n" for event in events))


def _cmd_generate_events(args: argparse.Namespace) -> int:
    config = _require_config(args)
    plan = config.build_plan()
    with config.build_completion_client() as client:
        result = pipeline_mod.generate_events(
            plan, config.seed_pool(), client, config.templates_dir()
        )
    _save_events_file(result.events, args.out)
    report = pipeline_mod.run_report(event_result=result)
    _emit(report, args.report)
    if result.warning:
        print(f"warning: {result.warning}", file=sys.stderr)
    return 0


def _cmd_generate_inferences(args: argparse.Namespace) -> int:
    config = _require_config(args)
    plan = config.build_plan()
    events = _load_events_file(args.events)
    with config.build_completion_client() as client:
        result = pipeline_mod.generate_inferences(events, plan, client, config.templates_dir())
    save_corpus(result.corpus, args.out)
    _emit(pipeline_mod.run_report(inference_result=result), args.report)
    for failure in result.failures:
        print(f"warning: {failure}", file=sys.stderr)
    return 0


def _cmd_labels_aggregate(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    labels = load_labels(args.labels)
    by_triple: dict[str, list[HumanLabel]] = {}
    for label in labels:
        by_triple.setdefault(label.triple_id, []).append(label)
    triples_by_id = {t.id: t for t in corpus}
    unknown = sorted(set(by_triple) - set(triples_by_id))
    if unknown:
        raise DataError(
            f"{args.labels}: labels reference {len(unknown)} unknown triple ids "
            f"(e.g. {unknown[:3]})"
        )
    labeled = []
    for triple in corpus:
        group = by_triple.get(triple.id)
        if not group:
            continue
        labeled.append(
            LabeledTriple(
                triple=triple,
                verdict=aggregate_labels(group),
                n_annotators=len(group),
            )
        )
    save_labeled(labeled, args.out)
    return 0


def _cmd_labels_split(args: argparse.Namespace) -> int:
    labeled = load_labeled(args.labeled)
    train, dev, test = split_labeled(labeled, args.seed)
    prefix = Path(args.out_prefix)
    save_labeled(train, prefix.parent / f"{prefix.name}.train.jsonl")
    save_labeled(dev, prefix.parent / f"{prefix.name}.dev.jsonl")
    save_labeled(test, prefix.parent / f"{prefix.name}.test.jsonl")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    config = _require_config(args)
    binding = config.scorer_binding()
    corpus = load_corpus(args.corpus)
    if binding.kind == "constant":
        scores = critic_mod.score_corpus(corpus, binding)
    else:
        with config.build_scorer_client() as scorer:
            scores = critic_mod.score_corpus(corpus, binding, scorer)
    critic_mod.save_scores(scores, args.out)
    return 0


def _parse_cutoff(raw: str) -> float | str:
    try:
        return float(raw)
    except ValueError:
        return raw


def _cmd_filter(args: argparse.Namespace) -> int:
    if (args.cutoff is None) == (args.preset is None):
        raise ConfigError("filter requires exactly one of --cutoff or --preset")
    corpus = load_corpus(args.corpus)
    scores = critic_mod.load_scores(args.scores)
    cutoff = args.cutoff if args.cutoff is not None else args.preset
    threshold = critic_mod.resolve_cutoff(cutoff, scores)
    save_corpus(critic_mod.filter_at_threshold(corpus, scores, threshold), args.out)
    return 0


def _load_training_ids(path: str | Path) -> set[str]:
    """Accept LabeledTriple/score JSONL or plain one-id-per-line files."""
    ids = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("{"):
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            triple_id = record.get("id") or record.get("triple_id")
            if not triple_id:
                raise DataError(f"{path}: line {lineno}: no id or triple_id field")
            ids.add(triple_id)
        else:
            ids.add(line)
    return ids


def _cmd_sweep(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    scores = critic_mod.load_scores(args.scores)
    holdout = load_labeled(args.holdout)
    cutoffs = [_parse_cutoff(c) for c in args.cutoffs.split(",") if c.strip()]
    if not cutoffs:
        raise ConfigError("sweep requires at least one cutoff")
    training_ids = _load_training_ids(args.training_ids) if args.training_ids else None
    report = critic_mod.sweep_report(corpus, scores, holdout, cutoffs, training_ids)
    _emit(report, args.out)
    return 0


def _labels_for_metrics(labeled: Sequence[LabeledTriple]) -> dict[str, bool]:
    return {
        item.triple.id: item.verdict is Verdict.ACCEPT
        for item in labeled
        if item.verdict is not Verdict.NO_JUDGEMENT
    }


def _cmd_eval_critic(args: argparse.Namespace) -> int:
    scores = critic_mod.load_scores(args.scores)
    labeled = load_labeled(args.labeled)
    labels = _labels_for_metrics(labeled)
    grid = [float(f) for f in args.grid.split(",") if f.strip()]
    curve = critic_mod.precision_curve(scores, labels, grid)
    report = {
        "n_labeled": len(labels),
        "n_no_judgement": len(labeled) - len(labels),
        "ap": critic_mod.average_precision(scores, labels),
        "target_precision": args.target_precision,
        "recall_at_precision": critic_mod.recall_at_precision(
            scores, labels, args.target_precision
        ),
        "precision_curve": curve.to_json(),
    }
    _emit(report, args.out)
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    entropy = None
    if args.entropy:
        config = _require_config(args)
        if not (
            config.has_scorer_endpoint("scorer_endpoint")
            and config.has_scorer_endpoint("cross_scorer_endpoint")
        ):
            raise ConfigError(
                "--entropy requires scorer_endpoint and cross_scorer_endpoint in config"
            )
        sample = list(corpus)
        if args.entropy_sample and args.entropy_sample < len(sample):
            rng = random.Random(config.rng_seed())
            sample = rng.sample(sample, args.entropy_sample)
        with config.build_named_scorer_client("scorer_endpoint") as self_scorer:
            with config.build_named_scorer_client("cross_scorer_endpoint") as cross_scorer:
                entropy = analytics_mod.entropy_report(sample, self_scorer, cross_scorer)
    report = analytics_mod.analytics_report(corpus, entropy)
    _emit(report, args.out)
    return 0


EXPORT_DELIMITER = "[GEN]"


def export_line(triple) -> str:
    return f"{triple.event} {triple.relation.display_template} {EXPORT_DELIMITER} {triple.tail}"


def _cmd_export(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    atomic_write_text(args.out, "".join(export_line(t) + "\n" for t in corpus))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distilkg",
        description="Distill knowledge triples from a completion LLM: generate, "
        "filter by critic score, analyze, and export student training data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, **kwargs: object) -> argparse.ArgumentParser:
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON run config path")
        return p

    p = add("generate-events", _cmd_generate_events, help="generate unique events")
    p.add_argument("--out", required=True, help="output events file (one per line)")
    p.add_argument("--report", help="run report JSON path (default stdout)")

    p = add(
        "generate-inferences", _cmd_generate_inferences, help="generate triples for events"
    )
    p.add_argument("--events", required=True, help="input events file")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.add_argument("--report", help="run report JSON path (default stdout)")

    labels = sub.add_parser("labels", help="aggregate or split human labels")
    labels_sub = labels.add_subparsers(dest="labels_command", required=True)
    p = labels_sub.add_parser("aggregate", help="raw annotator labels to verdicts")
    p.set_defaults(func=_cmd_labels_aggregate)
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True, help="raw label JSONL")
    p.add_argument("--out", required=True, help="labeled-triple JSONL")
    p = labels_sub.add_parser("split", help="seeded 80/10/10 split")
    p.set_defaults(func=_cmd_labels_split)
    p.add_argument("--labeled", required=True, help="labeled-triple JSONL")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-prefix", required=True, help="writes <prefix>.{train,dev,test}.jsonl")

    p = add("score", _cmd_score, help="score a corpus with the configured critic")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="scores JSONL")

    p = add("filter", _cmd_filter, help="keep triples at or above a cutoff")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--preset", choices=sorted(critic_mod.PRESET_KEPT_FRACTIONS))
    p.add_argument("--out", required=True)

    p = add("sweep", _cmd_sweep, help="size/precision table over cutoffs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--holdout", required=True, help="labeled-triple JSONL")
    p.add_argument("--cutoffs", required=True, help="comma list of cutoffs or presets")
    p.add_argument("--training-ids", help="ids used in critic training, for contamination check")
    p.add_argument("--out", help="report JSON path (default stdout)")

    p = add("eval-critic", _cmd_eval_critic, help="AP, recall at precision, curve")
    p.add_argument("--scores", required=True)
    p.add_argument("--labeled", required=True, help="labeled-triple JSONL")
    p.add_argument("--grid", default="1.0,0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1")
    p.add_argument("--target-precision", type=float, default=0.8)
    p.add_argument("--out", help="metrics JSON path (default stdout)")

    p = add("analyze", _cmd_analyze, help="lexical stats, soft-unique size, entropy")
    p.add_argument("--corpus", required=True)
    p.add_argument("--entropy", action="store_true", help="include the entropy block")
    p.add_argument("--entropy-sample", type=int, help="sample size for entropy estimation")
    p.add_argument("--out", help="report JSON path (default stdout)")

    p = add("export", _cmd_export, help="write student training lines")
    p.add_argument("--corpus", required=True, help="filtered corpus JSONL")
    p.add_argument("--out", required=True, help="training text file")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ServiceError as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except DistilkgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
