"""Neural companion service for the knowledge-distillation toolkit.

This package trains and serves two small models over the toolkit's file and
HTTP interfaces:

* a binary critic that scores (event, relation, tail) triples with an
  acceptance probability, exposed at ``POST /v1/score``;
* a causal language model used for sequence NLL scoring (``POST /v1/nll``)
  and trained from export files by sequence-level distillation.

It deliberately has no code-level dependency on the toolkit package: the two
sides communicate only through the documented HTTP endpoints and the shared
file formats (labeled-triple JSONL, critic-score JSONL, and export lines with
the ``[GEN]`` delimiter).
"""

from kgservice.tokenizer import WordTokenizer
from kgservice.models import CriticModel, CriticModelConfig, LMConfig, build_lm

__all__ = [
    "WordTokenizer",
    "CriticModel",
    "CriticModelConfig",
    "LMConfig",
    "build_lm",
]
