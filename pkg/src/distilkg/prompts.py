"""Few-shot prompt rendering, name substitution, and completion parsing.

Prompt templates live in version-controlled text files (one per relation plus
one for event generation), each holding header fields and a tab-separated
example section. A rendered prompt is the optional task header, numbered
example blocks, and a final open block whose output slot the model completes.

Generic markers PersonX/PersonY appear in stored events and tails; natural
names are substituted in at render time and restored at parse time. All
functions here are pure and safe for parallel use.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import PERSON_X, PERSON_Y, Event, Relation, normalize_text, validate_event
from .errors import ConfigError, DataError

__all__ = [
    "NameAssignment",
    "FewShotExample",
    "PromptTemplate",
    "SeedPool",
    "X_NAMES",
    "Y_NAMES",
    "BLOCK_ASSIGNMENTS",
    "TARGET_ASSIGNMENT",
    "load_template",
    "template_for",
    "load_seed_pool",
    "sample_seed_events",
    "substitute_names",
    "restore_markers",
    "assignment_for_event",
    "render_event_prompt",
    "render_inference_prompt",
    "parse_event_completion",
    "parse_inference_completion",
]

_ALLOWED_PLACEHOLDERS = frozenset({"index", "event", "tail", "nameX", "nameY"})
_PLACEHOLDER_RE = re.compile(r"\{(\w*)\}")

# Names visible in the reference prompt tables; X names fill the PersonX
# slot, Y names the PersonY slot.
X_NAMES = ("Devin", "Jamie", "Sydney", "Lindsay", "Rowan", "Lee", "Riley", "Adrian", "Hunter", "Sam", "Alex")
Y_NAMES = ("Jean", "Wyatt", "Ryan", "Pat", "Ali", "Noel", "Taylor", "Avery", "Charlie", "Chris")
NAME_POOL = frozenset(X_NAMES) | frozenset(Y_NAMES)


@dataclass(frozen=True)
class NameAssignment:
    """Concrete names standing in for PersonX and PersonY in one prompt."""

    nameX: str
    nameY: str

    def __post_init__(self) -> None:
        if not self.nameX or not self.nameY:
            raise ConfigError("name assignment requires two nonempty names")
        if self.nameX == self.nameY:
            raise ConfigError(f"nameX and nameY must differ, both are {self.nameX!r}")
        if self.nameX in self.nameY or self.nameY in self.nameX:
            raise ConfigError(
                f"names must not contain each other: {self.nameX!r}, {self.nameY!r}"
            )


# Fixed per-block assignments reproduce the reference few-shot blocks; the
# Lindsay block never shows a partner, so its Y name is an arbitrary pool pick.
BLOCK_ASSIGNMENTS = (
    NameAssignment("Devin", "Jean"),
    NameAssignment("Jamie", "Wyatt"),
    NameAssignment("Sydney", "Ryan"),
    NameAssignment("Lindsay", "Jean"),
    NameAssignment("Rowan", "Pat"),
    NameAssignment("Lee", "Ali"),
    NameAssignment("Riley", "Noel"),
    NameAssignment("Adrian", "Taylor"),
    NameAssignment("Hunter", "Avery"),
    NameAssignment("Sam", "Charlie"),
)
TARGET_ASSIGNMENT = NameAssignment("Alex", "Chris")


@dataclass(frozen=True)
class FewShotExample:
    event: str
    tail: str


@dataclass(frozen=True)
class PromptTemplate:
    """One prompt layout: header, block patterns, and default examples.

    relation is None for the event-generation template. connective is the
    leading word the model must supply after the open slot ("to" for
    to-infinitive tails); stored tails exclude it.
    """

    relation: Relation | None
    task_prompt: str
    input_pattern: str
    output_pattern: str
    block_sep: str
    connective: str
    n_examples: int
    examples: tuple[FewShotExample, ...]

    def __post_init__(self) -> None:
        if self.n_examples < 1:
            raise ConfigError(f"n_examples must be >= 1, got {self.n_examples}")
        for pattern in (self.input_pattern, self.output_pattern):
            for token in _PLACEHOLDER_RE.findall(pattern):
                if token not in _ALLOWED_PLACEHOLDERS:
                    raise ConfigError(
                        f"unknown placeholder {{{token}}} in pattern {pattern!r}"
                    )
        if not self.input_pattern:
            raise ConfigError("input pattern must be nonempty")


_SEPARATORS = {"blank": "\n\n", "space": " "}
_HEADER_KEYS = ("relation", "task_prompt", "input", "output", "sep", "connective", "n_examples")


def load_template(path: str | Path) -> PromptTemplate:
    """Parse a template file: `key: value` headers, then tab-separated examples."""
    path = Path(path)
    fields: dict[str, str] = {}
    examples: list[FewShotExample] = []
    in_examples = False
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if in_examples:
            if not line.strip():
                continue
            if "\t" not in line:
                raise ConfigError(f"{path}: line {lineno}: example needs a tab between event and tail")
            event, tail = line.split("\t", 1)
            examples.append(FewShotExample(event=event.strip(), tail=tail.strip()))
            continue
        if line.strip() == "examples:":
            in_examples = True
            continue
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep or key.strip() not in _HEADER_KEYS:
            raise ConfigError(f"{path}: line {lineno}: unknown header {line!r}")
        fields[key.strip()] = value.strip()
    missing = {"input", "output", "sep", "n_examples"} - fields.keys()
    if missing:
        raise ConfigError(f"{path}: missing header fields {sorted(missing)}")
    if fields["sep"] not in _SEPARATORS:
        raise ConfigError(f"{path}: sep must be one of {sorted(_SEPARATORS)}")
    relation = Relation.from_name(fields["relation"]) if fields.get("relation") else None
    try:
        n_examples = int(fields["n_examples"])
    except ValueError:
        raise ConfigError(f"{path}: n_examples must be an integer") from None
    return PromptTemplate(
        relation=relation,
        task_prompt=fields.get("task_prompt", ""),
        input_pattern=fields["input"],
        output_pattern=fields["output"],
        block_sep=_SEPARATORS[fields["sep"]],
        connective=fields.get("connective", ""),
        n_examples=n_examples,
        examples=tuple(examples),
    )


def _packaged_templates_dir() -> Path:
    return Path(str(resources.files("distilkg") / "templates"))


@lru_cache(maxsize=None)
def _packaged_template(filename: str) -> PromptTemplate:
    return load_template(_packaged_templates_dir() / filename)


def template_for(relation: Relation | None, templates_dir: str | Path | None = None) -> PromptTemplate:
    """Load the template for a relation (None selects event generation)."""
    filename = f"{relation.value if relation else 'events'}.txt"
    if templates_dir is None:
        return _packaged_template(filename)
    return load_template(Path(templates_dir) / filename)


@dataclass(frozen=True)
class SeedPool:
    """Curated events that seed event-generation prompts."""

    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        for event in self.events:
            validate_event(event)
        if len(set(self.events)) != len(self.events):
            raise DataError("seed pool contains duplicate events")

    def __len__(self) -> int:
        return len(self.events)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "SeedPool":
        return cls(events=tuple(validate_event(t) for t in texts))


def load_seed_pool(path: str | Path | None = None) -> SeedPool:
    """Read one event per nonblank line; defaults to the packaged seed file."""
    if path is None:
        path = Path(str(resources.files("distilkg") / "data" / "seed_events.txt"))
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return SeedPool.from_texts(line for line in lines if line.strip())


def sample_seed_events(pool: SeedPool, k: int, rng_seed: int) -> list[Event]:
    """Uniform sample without replacement, order randomized, deterministic."""
    if k > len(pool):
        raise ConfigError(f"cannot sample {k} events from a pool of {len(pool)}")
    return random.Random(rng_seed).sample(list(pool.events), k)


def substitute_names(text: str, names: NameAssignment) -> str:
    """Replace every PersonX/PersonY marker with the assigned names."""
    return text.replace(PERSON_X, names.nameX).replace(PERSON_Y, names.nameY)


def restore_markers(text: str, names: NameAssignment) -> str:
    """Replace whole-word name occurrences with generic markers.

    Word-boundary matching keeps longer words intact ("Alexandra" survives
    nameX = "Alex").
    """
    text = re.sub(rf"\b{re.escape(names.nameX)}\b", PERSON_X, text)
    return re.sub(rf"\b{re.escape(names.nameY)}\b", PERSON_Y, text)


def assignment_for_event(event: str, rng_seed: int) -> NameAssignment:
    """Deterministic name draw for one event under one run seed."""
    digest = hashlib.sha256(f"{rng_seed}\n{normalize_text(event)}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    name_x = rng.choice(X_NAMES)
    candidates = [n for n in Y_NAMES if n != name_x and n not in name_x and name_x not in n]
    return NameAssignment(name_x, rng.choice(candidates))


def _fill(pattern: str, index: int, event: str, tail: str, names: NameAssignment | None) -> str:
    return pattern.format(
        index=index,
        event=event,
        tail=tail,
        nameX=names.nameX if names else "",
        nameY=names.nameY if names else "",
    )


def _render_block(
    template: PromptTemplate, index: int, event: str, tail: str, names: NameAssignment | None
) -> str:
    parts = [_fill(template.input_pattern, index, event, tail, names)]
    if template.output_pattern:
        parts.append(_fill(template.output_pattern, index, event, tail, names))
    return template.block_sep.join(parts)


def _render_open_block(
    template: PromptTemplate, index: int, event: str, names: NameAssignment | None
) -> str:
    """The final block with the output slot left open for the model."""
    rendered_input = _fill(template.input_pattern, index, event, "", names)
    if "{tail}" not in template.output_pattern:
        return rendered_input
    head = template.output_pattern.split("{tail}", 1)[0]
    if template.connective:
        suffix = template.connective + " "
        if not head.endswith(suffix):
            raise ConfigError(
                f"output pattern {template.output_pattern!r} does not end with "
                f"connective {template.connective!r} before the tail slot"
            )
        head = head[: -len(suffix)]
    head = head.rstrip()
    if not head:
        return rendered_input
    return rendered_input + template.block_sep + _fill(head, index, event, "", names)


def _join_prompt(template: PromptTemplate, blocks: list[str], open_block: str) -> str:
    parts = ([template.task_prompt] if template.task_prompt else []) + blocks + [open_block]
    return "\n\n".join(parts)


def render_event_prompt(
    seed_events: Sequence[Event],
    rng_seed: int | None = None,
    template: PromptTemplate | None = None,
) -> str:
    """Render the event-generation prompt over the given seed events.

    rng_seed=None preserves the given order; an integer shuffles it
    deterministically. Output is byte-stable for equal inputs.
    """
    template = template if template is not None else template_for(None)
    events = [validate_event(e) for e in seed_events]
    if len(events) != template.n_examples:
        raise ConfigError(
            f"event template expects {template.n_examples} seed events, got {len(events)}"
        )
    if rng_seed is not None:
        random.Random(rng_seed).shuffle(events)
    blocks = [_render_block(template, i, ev, "", None) for i, ev in enumerate(events, start=1)]
    open_block = _render_open_block(template, len(events) + 1, "", None)
    return _join_prompt(template, blocks, open_block)


def _as_example(item: FewShotExample | tuple[str, str]) -> FewShotExample:
    if isinstance(item, FewShotExample):
        return item
    event, tail = item
    return FewShotExample(event=event, tail=tail)


def render_inference_prompt(
    relation: Relation,
    target_event: Event,
    few_shot: Sequence[FewShotExample | tuple[str, str]],
    names: NameAssignment,
    template: PromptTemplate | None = None,
) -> str:
    """Render a relation prompt: header, named example blocks, open slot.

    Example blocks use the fixed per-block name assignments; the target block
    uses `names`. Blocks are numbered 1..n with the open slot at n+1.
    """
    template = template if template is not None else template_for(relation)
    examples = [_as_example(item) for item in few_shot]
    if len(examples) != template.n_examples:
        raise ConfigError(
            f"{relation.value} template expects {template.n_examples} examples, "
            f"got {len(examples)}"
        )
    blocks = []
    for i, example in enumerate(examples, start=1):
        pair = BLOCK_ASSIGNMENTS[(i - 1) % len(BLOCK_ASSIGNMENTS)]
        event = substitute_names(validate_event(example.event), pair)
        tail = substitute_names(normalize_text(example.tail), pair)
        blocks.append(_render_block(template, i, event, tail, pair))
    target = substitute_names(validate_event(target_event), names)
    open_block = _render_open_block(template, template.n_examples + 1, target, names)
    return _join_prompt(template, blocks, open_block)


_EVENT_LINE_RE = re.compile(r"^\s*\d+\.\s*Event:\s*(.*)$")


def parse_event_completion(raw: str) -> list[Event]:
    """Extract candidate events from a completion of the event prompt.

    The first line continues the primed "N. Event:" slot; later lines must
    carry their own "k. Event:" marker. Parsing stops at the first nonblank
    line without a marker. Fragments failing event invariants are dropped.
    Total: returns [] rather than raising.
    """
    lines = raw.split("\n")
    fragments = [lines[0]]
    for line in lines[1:]:
        if not line.strip():
            continue
        match = _EVENT_LINE_RE.match(line)
        if match is None:
            break
        fragments.append(match.group(1))
    events = []
    for fragment in fragments:
        try:
            events.append(validate_event(fragment))
        except DataError:
            continue
    return events


_NEXT_BLOCK_RE = re.compile(r"\bSituation\s+\d+\s*:|\s\d+\.\s")


def parse_inference_completion(
    relation: Relation, raw: str, template: PromptTemplate | None = None
) -> str | None:
    """Extract one tail from a completion of a relation prompt.

    Takes text up to the first newline or next block marker, strips trailing
    sentence punctuation and the template connective, and normalizes. Returns
    None to signal an empty or malformed completion. Total: never raises on
    any raw string.
    """
    template = template if template is not None else template_for(relation)
    text = raw.split("\n", 1)[0]
    match = _NEXT_BLOCK_RE.search(text)
    if match is not None:
        text = text[: match.start()]
    text = text.strip().rstrip(".!?").strip()
    if template.connective:
        prefix = template.connective + " "
        if not text.startswith(prefix):
            return None
        text = text[len(prefix) :]
    text = normalize_text(text)
    return text or None
