"""Shared fixtures: bundled data paths and the worked example graph."""

import random
from pathlib import Path

import pytest

from kgrag.ingest import parse_triple_lines
from kgrag.store import GraphStore

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def rng() -> random.Random:
    """A fresh seeded generator so randomized tests stay reproducible."""
    return random.Random(0xC0FFEE)


@pytest.fixture
def box_input() -> str:
    """The worked-example paragraph, verbatim."""
    return (DATA / "box_input.txt").read_text(encoding="utf-8").rstrip("\n")


@pytest.fixture
def box_output() -> str:
    """The five extraction lines expected for box_input, verbatim."""
    return (DATA / "box_output.txt").read_text(encoding="utf-8").rstrip("\n")


@pytest.fixture
def box_store(box_output) -> GraphStore:
    """The worked-example graph: box_output parsed and inserted in order."""
    drafts, diagnostics = parse_triple_lines(box_output)
    assert diagnostics == []
    store = GraphStore()
    for draft in drafts:
        store.insert_triple(draft)
    return store
