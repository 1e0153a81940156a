"""Three-table store for extracted knowledge triples.

A triple is (subject, relation, object) plus the verbatim context sentence it
was extracted from. Subjects and objects are normalized entity names, shared
across triples; the store keeps them in a subjects table, a relations table
keyed by subject, and an objects table keyed by relation, so the graph stays
hierarchical while every triple remains reconstructible from its object row.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .errors import BadFraction, CorruptFile, EmptyField, IoFailure, UnknownId

STORE_HEADER = "KGSTORE v1"


def normalize_entity(text: str) -> str:
    """Trim, collapse internal whitespace runs to one space, uppercase."""
    return " ".join(text.split()).upper()


@dataclass(frozen=True)
class TripleDraft:
    """A parsed triple that has not been assigned a store id yet."""

    subject: str
    relation: str
    object: str
    context: str
    source_doc: str = ""
    source_paragraph: int = 0


@dataclass(frozen=True)
class Triple:
    """A stored triple. Fields are already normalized."""

    id: int
    subject: str
    relation: str
    object: str
    context: str
    source_doc: str = ""
    source_paragraph: int = 0


@dataclass(frozen=True)
class SubgraphSample:
    """Result of a random subgraph draw: which triple ids were kept."""

    kept_ids: tuple[int, ...]
    fraction: float
    seed: int


def format_triple_line(subject: str, relation: str, object_: str, context: str) -> str:
    """Render one triple in the comma-separated interchange form.

    The first three fields are quoted only when they contain a comma; the
    description is always quoted. Output parses back to the same fields.
    """

    def head(f: str) -> str:
        return f'"{f}"' if "," in f else f

    return f'{head(subject)}, {head(relation)}, {head(object_)}, "{context}"'


def _escape(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "\\":
                out.append("\\")
            elif nxt == "t":
                out.append("\t")
            elif nxt == "n":
                out.append("\n")
            elif nxt == "r":
                out.append("\r")
            else:
                raise CorruptFile(f"bad escape sequence \\{nxt}")
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


class GraphStore:
    """In-memory triple store with entity-shared adjacency.

    Triple ids are dense (0..n-1), assigned in insertion order, and never
    reused. Exact duplicates (same normalized subject, relation, object, and
    context) insert once and return the original id.
    """

    def __init__(self):
        # subjects table: row id -> normalized subject text
        self._subjects: list[str] = []
        self._subject_ids: dict[str, int] = {}
        # relations table: row id -> (subject row id, relation text)
        self._relations: list[tuple[int, str]] = []
        self._relation_ids: dict[tuple[int, str], int] = {}
        # objects table: row id == triple id -> full triple payload
        self._objects: list[tuple[int, str, str, str, int]] = []
        self._dedup: dict[tuple[str, str, str, str], int] = {}
        self._by_entity: dict[str, set[int]] = {}
        self._relation_texts: set[str] = set()

    def __len__(self) -> int:
        return len(self._objects)

    def insert_triple(self, draft: TripleDraft) -> int:
        """Insert one triple, returning its id (existing id on duplicates)."""
        subject = normalize_entity(draft.subject)
        relation = draft.relation.strip()
        object_ = normalize_entity(draft.object)
        if not subject or not relation or not object_:
            raise EmptyField(
                f"triple has an empty field after normalization: "
                f"subject={draft.subject!r} relation={draft.relation!r} "
                f"object={draft.object!r}"
            )
        key = (subject, relation, object_, draft.context)
        existing = self._dedup.get(key)
        if existing is not None:
            return existing

        subj_id = self._subject_ids.get(subject)
        if subj_id is None:
            subj_id = len(self._subjects)
            self._subjects.append(subject)
            self._subject_ids[subject] = subj_id
        rel_key = (subj_id, relation)
        rel_id = self._relation_ids.get(rel_key)
        if rel_id is None:
            rel_id = len(self._relations)
            self._relations.append(rel_key)
            self._relation_ids[rel_key] = rel_id

        triple_id = len(self._objects)
        self._objects.append(
            (rel_id, object_, draft.context, draft.source_doc, draft.source_paragraph)
        )
        self._dedup[key] = triple_id
        self._by_entity.setdefault(subject, set()).add(triple_id)
        self._by_entity.setdefault(object_, set()).add(triple_id)
        self._relation_texts.add(relation)
        return triple_id

    def get_triple(self, triple_id: int) -> Triple:
        if not 0 <= triple_id < len(self._objects):
            raise UnknownId(f"no triple with id {triple_id}")
        rel_id, object_, context, doc, para = self._objects[triple_id]
        subj_id, relation = self._relations[rel_id]
        return Triple(
            id=triple_id,
            subject=self._subjects[subj_id],
            relation=relation,
            object=object_,
            context=context,
            source_doc=doc,
            source_paragraph=para,
        )

    def triples(self) -> list[Triple]:
        """All triples in id order."""
        return [self.get_triple(i) for i in range(len(self._objects))]

    def get_adjacent(self, triple_id: int) -> list[int]:
        """Ids of all triples sharing an endpoint entity, ascending, no self."""
        t = self.get_triple(triple_id)
        linked = self._by_entity[t.subject] | self._by_entity[t.object]
        return sorted(linked - {triple_id})

    def stats(self) -> tuple[int, int, int]:
        """(triple count, distinct entity count, distinct relation count)."""
        return (len(self._objects), len(self._by_entity), len(self._relation_texts))

    def sample_subgraph(self, fraction: float, seed: int) -> SubgraphSample:
        """Draw a uniform without-replacement sample of triple ids.

        The kept count is fraction * len rounded half up. The same (fraction,
        seed) always selects the same ids.
        """
        if not 0.0 <= fraction <= 1.0:
            raise BadFraction(f"fraction {fraction} outside [0, 1]")
        n = len(self._objects)
        size = int(fraction * n + 0.5)
        rng = random.Random(seed)
        kept = tuple(sorted(rng.sample(range(n), size)))
        return SubgraphSample(kept_ids=kept, fraction=fraction, seed=seed)

    def dump_lines(self) -> list[str]:
        """All triples in the interchange line format, id order."""
        return [
            format_triple_line(t.subject, t.relation, t.object, t.context)
            for t in self.triples()
        ]

    def persist(self, path: str | Path) -> None:
        """Write the full store to a text file; stable byte-for-byte."""
        lines = [STORE_HEADER, "[SUBJECTS]"]
        for i, text in enumerate(self._subjects):
            lines.append(f"{i}\t{_escape(text)}")
        lines.append("[RELATIONS]")
        for i, (subj_id, text) in enumerate(self._relations):
            lines.append(f"{i}\t{subj_id}\t{_escape(text)}")
        lines.append("[OBJECTS]")
        for i, (rel_id, object_, context, doc, para) in enumerate(self._objects):
            lines.append(
                f"{i}\t{rel_id}\t{_escape(object_)}\t{_escape(context)}"
                f"\t{_escape(doc)}\t{para}"
            )
        try:
            Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot write store file {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "GraphStore":
        """Read a persisted store; the result round-trips byte-identically."""
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot read store file {path}: {e}") from e
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != STORE_HEADER:
            raise CorruptFile(f"missing {STORE_HEADER} header")

        sections: dict[str, list[str]] = {}
        current: list[str] | None = None
        for line in lines[1:]:
            if line in ("[SUBJECTS]", "[RELATIONS]", "[OBJECTS]"):
                if line in sections:
                    raise CorruptFile(f"duplicate section {line}")
                current = sections.setdefault(line, [])
            elif current is None:
                raise CorruptFile("row before first section")
            else:
                current.append(line)
        for name in ("[SUBJECTS]", "[RELATIONS]", "[OBJECTS]"):
            if name not in sections:
                raise CorruptFile(f"missing section {name}")

        store = cls()
        for row_no, line in enumerate(sections["[SUBJECTS]"]):
            parts = line.split("\t")
            if len(parts) != 2 or parts[0] != str(row_no):
                raise CorruptFile(f"bad subjects row {row_no}: {line!r}")
            text = _unescape(parts[1])
            store._subjects.append(text)
            store._subject_ids[text] = row_no
        for row_no, line in enumerate(sections["[RELATIONS]"]):
            parts = line.split("\t")
            if len(parts) != 3 or parts[0] != str(row_no):
                raise CorruptFile(f"bad relations row {row_no}: {line!r}")
            try:
                subj_id = int(parts[1])
            except ValueError as e:
                raise CorruptFile(f"bad subject id in relations row {row_no}") from e
            if not 0 <= subj_id < len(store._subjects):
                raise CorruptFile(f"relations row {row_no} references subject {subj_id}")
            text = _unescape(parts[2])
            store._relations.append((subj_id, text))
            store._relation_ids[(subj_id, text)] = row_no
            store._relation_texts.add(text)
        for row_no, line in enumerate(sections["[OBJECTS]"]):
            parts = line.split("\t")
            if len(parts) != 6 or parts[0] != str(row_no):
                raise CorruptFile(f"bad objects row {row_no}: {line!r}")
            try:
                rel_id = int(parts[1])
                para = int(parts[5])
            except ValueError as e:
                raise CorruptFile(f"bad integer in objects row {row_no}") from e
            if not 0 <= rel_id < len(store._relations):
                raise CorruptFile(f"objects row {row_no} references relation {rel_id}")
            object_ = _unescape(parts[2])
            context = _unescape(parts[3])
            doc = _unescape(parts[4])
            store._objects.append((rel_id, object_, context, doc, para))
            subj_id, relation = store._relations[rel_id]
            subject = store._subjects[subj_id]
            store._dedup[(subject, relation, object_, context)] = row_no
            store._by_entity.setdefault(subject, set()).add(row_no)
            store._by_entity.setdefault(object_, set()).add(row_no)
        return store
