"""Shared test fixtures and factories."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from distilkg.corpus import Corpus, KnowledgeTriple, Relation


def make_triple(
    tail: str,
    event: str = "PersonX plans a trip",
    relation: Relation = Relation.XWANT,
    **kwargs,
) -> KnowledgeTriple:
    return KnowledgeTriple.create(event=event, relation=relation, tail=tail, **kwargs)


def make_corpus(*tails: str, **kwargs) -> Corpus:
    return Corpus.from_entries(make_triple(tail, **kwargs) for tail in tails)


@pytest.fixture
def triple_factory():
    return make_triple


@pytest.fixture
def corpus_factory():
    return make_corpus
