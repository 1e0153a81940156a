"""Prompt assembly, evidence rendering, and choice parsing."""

import pytest

from kgrag.clients import HashEmbedder
from kgrag.errors import ClientFailure
from kgrag.generation import (
    SYSTEM_INSTRUCTION,
    Pipeline,
    Prompt,
    answer,
    compile_prompt,
    parse_choice,
    render_evidence,
)
from kgrag.index import VectorIndex
from kgrag.retrieval import EvidenceSet, RetrievalConfig, retrieve
from kgrag.store import GraphStore, TripleDraft, format_triple_line
from support import MappedClient, make_random_store, index_for_store
import random


def small_pipeline(seed=21, n=20, generator=None):
    store = make_random_store(random.Random(seed), n)
    index, embedder = index_for_store(store)
    return Pipeline(
        store=store,
        index=index,
        embedder=embedder,
        generator=generator or MappedClient({}),
    )


def evidence_for(pipe, query, cfg):
    evidence, _ = retrieve(query, cfg, pipe.store, pipe.index, pipe.embedder)
    return evidence


def test_system_instruction_wording():
    assert SYSTEM_INSTRUCTION.startswith("You are designed to help answer questions")
    assert "Not all knowledge given need to be used" in SYSTEM_INSTRUCTION
    assert SYSTEM_INSTRUCTION.endswith("decision making:")


def test_prompt_blocks_join_with_blank_lines():
    prompt = Prompt(system_text="SYS", evidence_text="E1\nE2", query_text="Q?")
    assert prompt.full_text == "SYS\n\nE1\nE2\n\nQ?"


def test_empty_evidence_prompt_is_instruction_plus_query():
    prompt = Prompt(system_text=SYSTEM_INSTRUCTION, evidence_text="", query_text="Q?")
    assert prompt.full_text == SYSTEM_INSTRUCTION + "\n\nQ?"


def test_render_evidence_lines_in_order():
    store = GraphStore()
    store.insert_triple(TripleDraft("A", "r", "B", "first ctx"))
    store.insert_triple(TripleDraft("C", "r", "D, E", "second ctx"))
    evidence = EvidenceSet(
        items=(
            (store.get_triple(0), 0.9),
            (store.get_triple(1), 0.5),
        )
    )
    text = render_evidence(evidence)
    assert text.split("\n") == [
        'A, r, B, "first ctx"',
        'C, r, "D, E", "second ctx"',
    ]
    assert render_evidence(EvidenceSet(items=())) == ""


def test_compile_prompt_uses_evidence_order():
    pipe = small_pipeline()
    cfg = RetrievalConfig(top_k=4, beam_width=2, max_depth=1)
    evidence = evidence_for(pipe, "a query", cfg)
    prompt = compile_prompt("a query", evidence)
    assert prompt.system_text == SYSTEM_INSTRUCTION
    assert prompt.query_text == "a query"
    expected_lines = [
        format_triple_line(t.subject, t.relation, t.object, t.context)
        for t, _ in evidence.items
    ]
    assert prompt.evidence_text.split("\n") == expected_lines
    assert prompt.full_text.endswith("\n\na query")


@pytest.mark.parametrize(
    "text,expected",
    [
        ("B", "B"),
        ("B.", "B"),
        ("  C) it is faster", "C"),
        ("The answer is C.", "C"),
        ("the answer is d", "D"),
        ("I think (A) fits best.", "A"),
        ("B. The answer is B", "B"),
        ("Either A or B", None),
        ("A. The answer is B", None),
        ("No letter here.", None),
        ("", None),
        ("ANSWER IS A", "A"),
        # A bare letter mid-sentence matches no pattern; the phrase wins.
        ("grade A quality, but the answer is C", "C"),
    ],
)
def test_parse_choice(text, expected):
    assert parse_choice(text) == expected


def test_answer_end_to_end_multiple_choice():
    pipe = small_pipeline()
    cfg = RetrievalConfig(top_k=3, beam_width=2, max_depth=1)
    evidence = evidence_for(pipe, "Which one? A. x B. y", cfg)
    prompt = compile_prompt("Which one? A. x B. y", evidence)
    pipe = Pipeline(
        store=pipe.store,
        index=pipe.index,
        embedder=pipe.embedder,
        generator=MappedClient({prompt.full_text: "The answer is B."}),
    )
    ans = answer("Which one? A. x B. y", cfg, pipe, multiple_choice=True)
    assert ans.raw_text == "The answer is B."
    assert ans.choice == "B"
    assert ans.prompt.full_text == prompt.full_text
    assert ans.evidence.ids() == evidence.ids()


def test_answer_open_ended_skips_parsing():
    pipe = small_pipeline()
    cfg = RetrievalConfig(top_k=2, beam_width=1, max_depth=0)
    evidence = evidence_for(pipe, "describe it", cfg)
    prompt = compile_prompt("describe it", evidence)
    pipe = Pipeline(
        store=pipe.store,
        index=pipe.index,
        embedder=pipe.embedder,
        generator=MappedClient({prompt.full_text: "A. full description"}),
    )
    ans = answer("describe it", cfg, pipe, multiple_choice=False)
    assert ans.choice is None
    assert ans.raw_text == "A. full description"


def test_answer_failure_attaches_prompt():
    class Failing:
        name = "fail"

        def complete(self, prompt):
            raise ClientFailure("backend down")

    pipe = small_pipeline(generator=Failing())
    cfg = RetrievalConfig(top_k=2, beam_width=1, max_depth=0)
    with pytest.raises(ClientFailure) as exc:
        answer("q", cfg, pipe)
    assert exc.value.prompt is not None
    assert exc.value.prompt.startswith(SYSTEM_INSTRUCTION)


def test_k0_prompt_is_instruction_plus_query_bytes():
    pipe = small_pipeline()
    cfg = RetrievalConfig(top_k=0, beam_width=1, max_depth=1)
    evidence = evidence_for(pipe, "bare question", cfg)
    prompt = compile_prompt("bare question", evidence)
    assert prompt.full_text == f"{SYSTEM_INSTRUCTION}\n\nbare question"
