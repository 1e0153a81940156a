"""Prompt compilation and answer generation.

The prompt is three blocks joined by blank lines: a fixed system instruction,
the rendered evidence (one triple per line in the interchange format, best
score first), and the query. With no evidence the middle block disappears and
the prompt is instruction plus query only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .clients import CompletionClient, EmbeddingClient
from .errors import ClientFailure
from .index import VectorIndex
from .retrieval import EvidenceSet, RetrievalConfig, retrieve
from .store import GraphStore, format_triple_line

SYSTEM_INSTRUCTION = (
    "You are designed to help answer questions using retrieved knowledge. "
    "Not all knowledge given need to be used but focus on the most important "
    "information. Remember this knowledge, if there is any, to help your "
    "decision making:"
)

# Ordered patterns for pulling a multiple-choice letter out of free text:
# a leading letter, an "answer is X" phrase, or a "(X)" marker. If the
# patterns together produce more than one distinct letter, the reply is
# ambiguous and no choice is returned.
_CHOICE_PATTERNS = [
    re.compile(r"^\s*([A-D])\b"),
    re.compile(r"\banswer\s+is\s+([A-D])\b", re.IGNORECASE),
    re.compile(r"\(([A-D])\)"),
]


@dataclass(frozen=True)
class Prompt:
    system_text: str
    evidence_text: str
    query_text: str

    @property
    def full_text(self) -> str:
        blocks = [self.system_text]
        if self.evidence_text:
            blocks.append(self.evidence_text)
        blocks.append(self.query_text)
        return "\n\n".join(blocks)


@dataclass(frozen=True)
class Answer:
    raw_text: str
    choice: str | None
    evidence: EvidenceSet
    prompt: Prompt


@dataclass(frozen=True)
class Pipeline:
    """Everything answer() needs: graph, index, and the two clients."""

    store: GraphStore
    index: VectorIndex
    embedder: EmbeddingClient
    generator: CompletionClient


def render_evidence(evidence: EvidenceSet) -> str:
    """One interchange-format line per retrieved triple, evidence order."""
    return "\n".join(
        format_triple_line(t.subject, t.relation, t.object, t.context)
        for t, _ in evidence.items
    )


def compile_prompt(query_text: str, evidence: EvidenceSet) -> Prompt:
    return Prompt(
        system_text=SYSTEM_INSTRUCTION,
        evidence_text=render_evidence(evidence),
        query_text=query_text,
    )


def parse_choice(text: str) -> str | None:
    """Extract A/B/C/D from a model reply; None when absent or ambiguous."""
    letters: set[str] = set()
    for pattern in _CHOICE_PATTERNS:
        for match in pattern.finditer(text):
            letters.add(match.group(1).upper())
    if len(letters) == 1:
        return next(iter(letters))
    return None


def answer(
    query_text: str,
    cfg: RetrievalConfig,
    pipe: Pipeline,
    multiple_choice: bool = False,
) -> Answer:
    """Retrieve evidence, compile the prompt, and generate a reply.

    Generation failures propagate as ClientFailure with the compiled prompt
    attached so the request can be replayed or recorded.
    """
    evidence, _ = retrieve(query_text, cfg, pipe.store, pipe.index, pipe.embedder)
    prompt = compile_prompt(query_text, evidence)
    try:
        raw = pipe.generator.complete(prompt.full_text)
    except ClientFailure as e:
        e.prompt = prompt.full_text
        raise
    choice = parse_choice(raw) if multiple_choice else None
    return Answer(raw_text=raw, choice=choice, evidence=evidence, prompt=prompt)
