"""Paragraph splitting, the extraction prompt, and response parsing."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgrag.clients import EchoClient
from kgrag.errors import ClientFailure
from kgrag.ingest import (
    EXTRACTION_PROMPT,
    INPUT_DELIMITER,
    Document,
    build_extraction_prompt,
    build_graph,
    extract_document,
    parse_triple_lines,
    split_paragraphs,
)
from kgrag.store import format_triple_line
from support import MappedClient


def test_split_paragraphs_on_blank_lines():
    assert split_paragraphs("A\n\nB\n\nC") == ["A", "B", "C"]
    assert split_paragraphs("line one\nline two\n\nnext") == ["line one\nline two", "next"]
    assert split_paragraphs("") == []
    assert split_paragraphs("\n\n   \n") == []


def test_split_paragraphs_keeps_headings_standalone():
    body = "# Title\nIntro text\ncontinues here.\n\n## Sub\nMore."
    assert split_paragraphs(body) == ["# Title", "Intro text\ncontinues here.", "## Sub", "More."]
    # A hash without a following space is prose, not a heading.
    assert split_paragraphs("#5 drill\nnext line") == ["#5 drill\nnext line"]


def test_extraction_prompt_shape():
    prompt = build_extraction_prompt("The machine mills parts.")
    assert prompt.startswith("-Goal-")
    assert 'ENTITY_1, RELATIONSHIP_TYPE, ENTITY_2, "RELATIONSHIP_DESCRIPTION"' in EXTRACTION_PROMPT
    assert prompt.endswith(f"\n\n{INPUT_DELIMITER}\nThe machine mills parts.")


def test_worked_example_lines_parse(box_output):
    drafts, diagnostics = parse_triple_lines(box_output)
    assert diagnostics == []
    assert len(drafts) == 5
    assert drafts[0].subject == "5-AXIS CNC MILLING MACHINE TOOL"
    assert drafts[0].relation == "is used for"
    assert drafts[2].object == "MILLING, DRILLING, CUTTING, AND ENGRAVING"
    assert drafts[2].context.startswith("The machine is designed to perform")
    assert drafts[4].subject == "TRADITIONAL 3-AXIS MACHINE"
    assert drafts[4].object == "GEOMETRY COMPLEXITY"


def test_missing_description_diagnostic():
    drafts, diagnostics = parse_triple_lines("A, rel, B")
    assert drafts == []
    assert len(diagnostics) == 1
    assert diagnostics[0].line_no == 1
    assert diagnostics[0].reason == "MissingDescription"
    assert diagnostics[0].text == "A, rel, B"


def test_too_few_fields_diagnostics():
    for line in ("A, rel", "justone", 'A,, B, "d"', ' , rel, B, "d"'):
        drafts, diagnostics = parse_triple_lines(line)
        assert drafts == []
        assert [d.reason for d in diagnostics] == ["TooFewFields"], line


def test_unbalanced_quote_diagnostics():
    for line in ('A, r, B, "unclosed', '"A junk, r, B', '"A" x, r, B, "d"', 'A, r, B, "'):
        drafts, diagnostics = parse_triple_lines(line)
        assert drafts == [], line
        assert [d.reason for d in diagnostics] == ["UnbalancedQuotes"], line
    # A properly closed empty description is a parse, not a diagnostic.
    drafts, diagnostics = parse_triple_lines('A, r, B, ""')
    assert diagnostics == []
    assert drafts[0].context == ""


def test_description_may_contain_quotes_and_commas():
    line = 'A, says, B, "He said "stop, now" and left."'
    drafts, diagnostics = parse_triple_lines(line)
    assert diagnostics == []
    assert drafts[0].context == 'He said "stop, now" and left.'


def test_bad_lines_skipped_without_aborting():
    raw = '\n'.join(
        [
            'A, r, B, "first"',
            "",
            "broken line",
            'C, r, D, "second"',
        ]
    )
    drafts, diagnostics = parse_triple_lines(raw)
    assert [d.context for d in drafts] == ["first", "second"]
    assert [(d.line_no, d.reason) for d in diagnostics] == [(3, "TooFewFields")]


def test_extract_document_orders_and_tags_drafts():
    body = "Para one.\n\nPara two.\n\nPara three."
    replies = {
        build_extraction_prompt("Para one."): 'A, r, B, "a"\nC, r, D, "b"',
        build_extraction_prompt("Para two."): "",
        build_extraction_prompt("Para three."): 'E, r, F, "c"\nbad\nG, r, H, "d"',
    }
    doc = Document(doc_id="doc.md", body=body)
    for parallel in (1, 4):
        drafts = extract_document(doc, MappedClient(replies), parallel=parallel)
        assert [d.context for d in drafts] == ["a", "b", "c", "d"]
        assert [d.source_paragraph for d in drafts] == [0, 0, 2, 2]
        assert {d.source_doc for d in drafts} == {"doc.md"}


def test_extract_document_failure_carries_coordinates():
    class Failing:
        name = "fail"

        def complete(self, prompt):
            raise ClientFailure("boom")

    with pytest.raises(ClientFailure) as exc:
        extract_document(Document(doc_id="d.md", body="One para."), Failing())
    assert exc.value.doc_id == "d.md"
    assert exc.value.paragraph_index == 0


def test_build_graph_dedups_across_documents():
    body = "Only para."
    replies = {build_extraction_prompt(body): 'A, r, B, "same"\nA, r, B, "same"'}
    docs = [Document("x.md", body), Document("y.md", body)]
    store = build_graph(docs, MappedClient(replies))
    # Four parsed lines collapse to one stored triple.
    assert len(store) == 1
    assert store.get_triple(0).source_doc == "x.md"


def test_build_graph_with_echo_client_stores_only_the_exemplar():
    # An echoed prompt contains exactly one parseable line: the format
    # exemplar from the instructions (it appears twice and dedups to one).
    store = build_graph([Document("a.md", "Some text.")], EchoClient())
    assert len(store) == 1
    assert store.get_triple(0).subject == "ENTITY_1"
    assert store.get_triple(0).context == "RELATIONSHIP_DESCRIPTION"


@given(
    raw=st.text(
        st.characters(blacklist_categories=("Cs",)),
        max_size=200,
    )
)
def test_parser_never_crashes_and_accounts_every_line(raw):
    drafts, diagnostics = parse_triple_lines(raw)
    non_blank = [line for line in raw.splitlines() if line.strip()]
    assert len(drafts) + len(diagnostics) == len(non_blank)
    assert all(d.line_no >= 1 for d in diagnostics)


def _single_line(s: str) -> bool:
    # splitlines recognizes more breaks than \n and \r (\x85,  , ...).
    return len((s + "x").splitlines()) == 1


head = st.text(
    st.characters(blacklist_characters='"', blacklist_categories=("Cs",)),
    min_size=1,
    max_size=20,
).filter(lambda s: s.strip() == s and s.split() and _single_line(s))
ctx = st.text(
    st.characters(blacklist_categories=("Cs",)),
    max_size=40,
).filter(lambda s: s != "" and _single_line(s))


@given(subject=head, relation=head, object_=head, context=ctx)
def test_formatted_lines_parse_back(subject, relation, object_, context):
    line = format_triple_line(subject, relation, object_, context)
    drafts, diagnostics = parse_triple_lines(line)
    assert diagnostics == []
    d = drafts[0]
    assert (d.subject, d.relation, d.object, d.context) == (subject, relation, object_, context)
