"""Document ingestion: paragraph splitting and LLM triple extraction.

Documents are Markdown text. Each paragraph is sent to a completion client
with a fixed instruction template; the response is parsed line by line into
triple drafts. Malformed lines are skipped with diagnostics instead of
failing the document, because extraction-model output is noisy.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace

from .clients import CompletionClient, run_parallel
from .errors import ClientFailure
from .store import GraphStore, TripleDraft

log = logging.getLogger(__name__)

# Instruction template sent ahead of every paragraph. Responses are expected
# to contain one triple per line in the comma-separated format it describes.
EXTRACTION_PROMPT = """-Goal-
Extract structured triples directly from the input text in the following format:

ENTITY_1, RELATIONSHIP_TYPE, ENTITY_2, "RELATIONSHIP_DESCRIPTION"

-Steps-
1. Read the input text carefully to identify:
   - Key entities: Concepts, systems, technologies, or processes central to the text.
   - Relationships: Clear actions or connections described in the text that link two entities.
   - Descriptions: Verbatim or paraphrased descriptions from the text that explain the relationship.

2. For each relationship, construct a triple:
   - ENTITY_1: The primary concept or entity initiating the relationship.
   - RELATIONSHIP_TYPE: The action or connection type as described in the text.
   - ENTITY_2: The target concept or entity affected by ENTITY_1.
   - RELATIONSHIP_DESCRIPTION: A concise description of the relationship directly sourced from the input text.

3. Each triple must be clear and in this format:
   ENTITY_1, RELATIONSHIP_TYPE, ENTITY_2, "RELATIONSHIP_DESCRIPTION"

4. Use the original text verbatim where possible for the description, ensuring accuracy. Avoid adding external interpretations or explanations."""

INPUT_DELIMITER = "-Input Text-"

_HEADING = re.compile(r"^#{1,6}(\s|$)")


@dataclass(frozen=True)
class Document:
    doc_id: str
    body: str


@dataclass(frozen=True)
class ParseDiagnostic:
    """One skipped response line: 1-based line number, reason, raw text."""

    line_no: int
    reason: str
    text: str


def split_paragraphs(body: str) -> list[str]:
    """Split a document body into paragraphs.

    A paragraph is a maximal run of non-blank lines; one or more blank lines
    separate paragraphs. Markdown headings always form their own paragraph,
    even without a surrounding blank line. All-blank input gives no
    paragraphs.
    """
    paragraphs: list[str] = []
    block: list[str] = []

    def flush() -> None:
        if block:
            paragraphs.append("\n".join(block))
            block.clear()

    for line in body.split("\n"):
        if not line.strip():
            flush()
        elif _HEADING.match(line):
            flush()
            paragraphs.append(line)
        else:
            block.append(line)
    flush()
    return paragraphs


def build_extraction_prompt(paragraph: str) -> str:
    """Template, delimiter line, then the paragraph verbatim."""
    return f"{EXTRACTION_PROMPT}\n\n{INPUT_DELIMITER}\n{paragraph}"


class _LineError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _take_field(line: str, pos: int) -> tuple[str, int]:
    """Read one field starting at pos; stop at a top-level comma or the end.

    Returns (field text, position of the comma or end of line). A field that
    opens with a double quote runs to the next double quote and may contain
    commas; anything but whitespace between its closing quote and the next
    comma breaks the quote structure.
    """
    n = len(line)
    while pos < n and line[pos].isspace():
        pos += 1
    if pos < n and line[pos] == '"':
        end = line.find('"', pos + 1)
        if end < 0:
            raise _LineError("UnbalancedQuotes")
        text = line[pos + 1 : end]
        pos = end + 1
        while pos < n and line[pos].isspace():
            pos += 1
        if pos < n and line[pos] != ",":
            raise _LineError("UnbalancedQuotes")
        return text, pos
    comma = line.find(",", pos)
    if comma < 0:
        return line[pos:].strip(), n
    return line[pos:comma].strip(), comma


def _parse_line(line: str) -> tuple[str, str, str, str]:
    """One response line -> (entity_1, relationship_type, entity_2, description).

    Grammar: three comma-separated fields, a comma, then a double-quoted
    description. The description spans from the quote after the third comma
    to the final quote on the line, so it may itself contain quotes.
    """
    pos = 0
    head: list[str] = []
    for k in range(3):
        text, pos = _take_field(line, pos)
        head.append(text)
        if pos >= len(line):
            if k < 2:
                raise _LineError("TooFewFields")
            raise _LineError("MissingDescription")
        pos += 1  # the comma
    if any(not f.strip() for f in head):
        raise _LineError("TooFewFields")
    rest = line[pos:].strip()
    if not rest.startswith('"'):
        raise _LineError("MissingDescription")
    if len(rest) < 2 or not rest.endswith('"'):
        raise _LineError("UnbalancedQuotes")
    return head[0], head[1], head[2], rest[1:-1]


def parse_triple_lines(
    raw: str,
) -> tuple[list[TripleDraft], list[ParseDiagnostic]]:
    """Parse an extraction response into triple drafts plus diagnostics.

    Blank lines are ignored. Every other line yields exactly one draft or
    one diagnostic; a bad line never aborts the batch.
    """
    drafts: list[TripleDraft] = []
    diagnostics: list[ParseDiagnostic] = []
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            subject, relation, object_, description = _parse_line(line)
        except _LineError as e:
            diagnostics.append(ParseDiagnostic(line_no, e.reason, line))
            continue
        drafts.append(
            TripleDraft(
                subject=subject,
                relation=relation,
                object=object_,
                context=description,
            )
        )
    return drafts, diagnostics


def extract_document(
    doc: Document, client: CompletionClient, parallel: int = 1
) -> list[TripleDraft]:
    """Extract triples from every paragraph of one document.

    Paragraph requests may run concurrently up to `parallel`; results are
    reassembled in paragraph order so output order never depends on timing.
    Parse diagnostics are logged, not raised. Client failures propagate with
    the document and paragraph coordinates attached.
    """
    paragraphs = split_paragraphs(doc.body)

    def fetch(item: tuple[int, str]) -> str:
        idx, text = item
        try:
            return client.complete(build_extraction_prompt(text))
        except ClientFailure as e:
            e.doc_id = doc.doc_id
            e.paragraph_index = idx
            raise

    responses = run_parallel(fetch, list(enumerate(paragraphs)), parallel)

    drafts: list[TripleDraft] = []
    for idx, response in enumerate(responses):
        parsed, diagnostics = parse_triple_lines(response)
        for diag in diagnostics:
            log.warning(
                "%s paragraph %d: skipping line %d (%s): %r",
                doc.doc_id,
                idx,
                diag.line_no,
                diag.reason,
                diag.text,
            )
        for draft in parsed:
            drafts.append(replace(draft, source_doc=doc.doc_id, source_paragraph=idx))
    return drafts


def build_graph(
    docs: list[Document], client: CompletionClient, parallel: int = 1
) -> GraphStore:
    """Extract every document and insert the results into a fresh store.

    Insertion order is document order then paragraph order then line order,
    so triple ids are reproducible for a fixed corpus and client.
    """
    store = GraphStore()
    for doc in docs:
        for draft in extract_document(doc, client, parallel=parallel):
            store.insert_triple(draft)
    return store
