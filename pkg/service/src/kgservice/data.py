"""File formats shared with the generation toolkit.

Two inputs cross the package boundary as files:

* labeled triples — JSONL records carrying at least ``id``, ``event``,
  ``relation``, ``tail``, and ``verdict`` (``accept`` / ``reject`` /
  ``no_judgement``);
* export lines — ``"{condition} [GEN] {target}"`` text lines produced for
  distillation.

Everything here is parsing, rendering, and the guard that keeps training code
from ever touching a held-out test split.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

GEN_DELIMITER = "[GEN]"

VERDICTS = ("accept", "reject", "no_judgement")

# Neutral first names used when replacing the PersonX / PersonY placeholders.
NAME_POOL = (
    "Alex",
    "Bailey",
    "Casey",
    "Dana",
    "Drew",
    "Erin",
    "Frankie",
    "Harper",
    "Jordan",
    "Morgan",
)

# Fixed pair used outside training so that scoring stays deterministic.
EVAL_NAMES = ("Alex", "Jordan")


class DataFileError(ValueError):
    """A data file failed validation; the message names the file and line."""


@dataclass(frozen=True)
class LabeledExample:
    """One labeled triple as consumed by critic training."""

    triple_id: str
    event: str
    relation: str
    tail: str
    verdict: str

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")


def render_triple(event: str, relation: str, tail: str) -> str:
    """Render a triple to the single text line the critic scores."""

    return f"{event} {relation} {tail}"


def substitute_names(text: str, names: tuple[str, str]) -> str:
    """Replace the PersonX / PersonY placeholders with concrete names."""

    name_x, name_y = names
    return text.replace("PersonX", name_x).replace("PersonY", name_y)


def sample_name_pair(rng: random.Random) -> tuple[str, str]:
    """Draw two distinct names from the pool."""

    name_x = rng.choice(NAME_POOL)
    name_y = rng.choice([name for name in NAME_POOL if name != name_x])
    return name_x, name_y


def guard_training_path(path: str | Path) -> Path:
    """Refuse to open held-out test files from training code.

    Any path whose file name contains a ``test`` segment (``labels.test.jsonl``,
    ``test.jsonl``, ``foo_test.jsonl``) is rejected so a typo in a training
    configuration can never leak the evaluation split into training.
    """

    resolved = Path(path)
    name = resolved.name.casefold()
    stem_parts = name.replace("-", ".").replace("_", ".").split(".")
    if "test" in stem_parts:
        raise PermissionError(
            f"refusing to read {resolved}: file names containing a 'test' "
            "segment are reserved for held-out evaluation data"
        )
    return resolved


def load_labeled(path: str | Path, *, for_training: bool = False) -> list[LabeledExample]:
    """Read a labeled-triple JSONL file.

    ``for_training=True`` routes the path through :func:`guard_training_path`.
    Records keep their file order; unknown extra fields are ignored.
    """

    resolved = guard_training_path(path) if for_training else Path(path)
    if not resolved.exists():
        raise FileNotFoundError(f"labeled file not found: {resolved}")
    examples: list[LabeledExample] = []
    seen_ids: set[str] = set()
    with resolved.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise DataFileError(f"{resolved}: line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DataFileError(f"{resolved}: line {line_no}: expected a JSON object")
            triple_id = record.get("id", record.get("triple_id"))
            missing = [
                key
                for key, value in (
                    ("id", triple_id),
                    ("event", record.get("event")),
                    ("relation", record.get("relation")),
                    ("tail", record.get("tail")),
                    ("verdict", record.get("verdict")),
                )
                if not isinstance(value, str) or not value
            ]
            if missing:
                raise DataFileError(
                    f"{resolved}: line {line_no}: missing or non-string field(s): "
                    + ", ".join(missing)
                )
            if record["verdict"] not in VERDICTS:
                raise DataFileError(
                    f"{resolved}: line {line_no}: unknown verdict {record['verdict']!r}"
                )
            if triple_id in seen_ids:
                raise DataFileError(
                    f"{resolved}: line {line_no}: duplicate triple id {triple_id!r}"
                )
            seen_ids.add(triple_id)
            examples.append(
                LabeledExample(
                    triple_id=triple_id,
                    event=record["event"],
                    relation=record["relation"],
                    tail=record["tail"],
                    verdict=record["verdict"],
                )
            )
    return examples


def check_disjoint_ids(
    train: Sequence[LabeledExample], dev: Sequence[LabeledExample]
) -> None:
    """Abort when the train and dev splits share any triple id."""

    overlap = {ex.triple_id for ex in train} & {ex.triple_id for ex in dev}
    if overlap:
        sample = ", ".join(sorted(overlap)[:3])
        raise DataFileError(
            f"train and dev splits share {len(overlap)} triple id(s) (e.g. [{sample}]); "
            "splits must be disjoint"
        )


@dataclass(frozen=True)
class ExportExample:
    """One distillation example: condition text, target text."""

    condition: str
    target: str

    @property
    def line(self) -> str:
        return f"{self.condition} {GEN_DELIMITER} {self.target}"


def parse_export_line(line: str, *, source: str, line_no: int) -> ExportExample:
    """Parse one ``condition [GEN] target`` line, validating both sides."""

    delimiter = f" {GEN_DELIMITER} "
    if delimiter not in line:
        raise DataFileError(
            f"{source}: line {line_no}: missing ' {GEN_DELIMITER} ' delimiter"
        )
    condition, _, target = line.partition(delimiter)
    if not condition.strip():
        raise DataFileError(f"{source}: line {line_no}: empty condition before delimiter")
    if not target.strip():
        raise DataFileError(f"{source}: line {line_no}: empty target after delimiter")
    return ExportExample(condition=condition.strip(), target=target.strip())


def load_export(path: str | Path) -> list[ExportExample]:
    """Read an export file of distillation lines; aborts on malformed lines."""

    resolved = Path(path)
    if not resolved.exists():
        raise FileNotFoundError(f"export file not found: {resolved}")
    examples: list[ExportExample] = []
    with resolved.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.rstrip("\n")
            if not text.strip():
                raise DataFileError(f"{resolved}: line {line_no}: empty line")
            examples.append(parse_export_line(text, source=str(resolved), line_no=line_no))
    if not examples:
        raise DataFileError(f"{resolved}: export file is empty")
    return examples
