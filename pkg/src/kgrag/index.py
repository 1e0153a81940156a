"""Embedding index over stored triples.

Each triple is embedded as "<subject> <relation> <object>" and kept in a
flat id -> vector table. Query scoring is cosine similarity; top-K selection
breaks score ties by ascending triple id so results are fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clients import EmbeddingClient, run_parallel
from .errors import (
    CorruptFile,
    DimensionMismatch,
    InconsistentDimension,
    IoFailure,
    UnknownId,
)
from .store import GraphStore, Triple

INDEX_HEADER = "KGVEC v1"

# Below this many candidates a full sort is cheaper than partial selection.
PARTIAL_SELECT_CUTOFF = 4096


def triple_text(t: Triple) -> str:
    """Text form fed to the embedding model."""
    return f"{t.subject} {t.relation} {t.object}"


def cosine_sim(a, b) -> float:
    """Cosine similarity of two equal-length vectors.

    Zero-norm vectors score 0.0 against everything, so empty embeddings never
    rank above real matches. Raises DimensionMismatch on unequal lengths.
    """
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise DimensionMismatch(f"vector lengths {va.shape} vs {vb.shape}")
    num = (va * vb).sum()
    norm_a = np.sqrt((va * va).sum())
    norm_b = np.sqrt((vb * vb).sum())
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(num / (norm_a * norm_b))


@dataclass(frozen=True)
class RankedCandidate:
    """A triple id with its similarity score against the current query."""

    id: int
    score: float


class VectorIndex:
    """Immutable-once-built table of triple embeddings.

    Ids are triple ids; every vector has the same dimension; all vectors are
    finite. Built once, then shared read-only between queries.
    """

    def __init__(self, dim: int):
        if dim < 0:
            raise ValueError("dim must be >= 0")
        self.dim = dim
        self._ids: list[int] = []
        self._pos: dict[int, int] = {}
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._id_arr: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, triple_id: int) -> bool:
        return triple_id in self._pos

    def ids(self) -> list[int]:
        return list(self._ids)

    def position_of(self, triple_id: int) -> int | None:
        """Row position of an id in scores_for output, None when absent."""
        return self._pos.get(triple_id)

    def add(self, triple_id: int, vector) -> None:
        row = np.asarray(vector, dtype=np.float64)
        if row.ndim != 1 or len(row) != self.dim:
            raise InconsistentDimension(
                f"vector for id {triple_id} has length {row.size}, index dim is {self.dim}"
            )
        if not np.all(np.isfinite(row)):
            raise ValueError(f"vector for id {triple_id} contains non-finite values")
        if triple_id in self._pos:
            raise ValueError(f"id {triple_id} already in index")
        self._pos[triple_id] = len(self._ids)
        self._ids.append(triple_id)
        self._rows.append(row)
        self._matrix = None  # invalidate packed form

    def vector(self, triple_id: int) -> np.ndarray:
        pos = self._pos.get(triple_id)
        if pos is None:
            raise UnknownId(f"no vector for id {triple_id}")
        return self._rows[pos]

    def _packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._matrix is None:
            self._matrix = (
                np.vstack(self._rows)
                if self._rows
                else np.zeros((0, self.dim), dtype=np.float64)
            )
            self._norms = np.sqrt((self._matrix * self._matrix).sum(axis=1))
            self._id_arr = np.asarray(self._ids, dtype=np.int64)
        return self._matrix, self._norms, self._id_arr

    def scores_for(self, query) -> np.ndarray:
        """Cosine score of every entry against the query, in entry order.

        Entrywise equal to cosine_sim(query, vector(id)); zero-norm entries
        and zero-norm queries score 0.0.
        """
        q = np.asarray(query, dtype=np.float64)
        if q.ndim != 1 or len(q) != self.dim:
            raise DimensionMismatch(f"query length {q.size}, index dim {self.dim}")
        matrix, norms, _ = self._packed()
        if len(self._ids) == 0:
            return np.zeros(0, dtype=np.float64)
        q_norm = np.sqrt((q * q).sum())
        num = (matrix * q).sum(axis=1)
        denom = norms * q_norm
        out = np.zeros(len(num), dtype=np.float64)
        nonzero = denom != 0.0
        out[nonzero] = num[nonzero] / denom[nonzero]
        return out

    def score(self, query, triple_id: int) -> float:
        pos = self._pos.get(triple_id)
        if pos is None:
            raise UnknownId(f"no vector for id {triple_id}")
        return cosine_sim(query, self._rows[pos])

    def top_k(
        self, query, k: int, restrict_to=None
    ) -> list[RankedCandidate]:
        """The k best-scoring entries, score descending, ties by ascending id.

        restrict_to limits candidates to the given ids. k of 0 gives [];
        k larger than the candidate count gives everything, still ordered.
        """
        if k < 0:
            raise ValueError("k must be >= 0")
        if k == 0 or not self._ids:
            return []
        scores = self.scores_for(query)
        _, _, id_arr = self._packed()
        if restrict_to is not None:
            mask = np.isin(id_arr, np.asarray(sorted(restrict_to), dtype=np.int64))
            id_arr = id_arr[mask]
            scores = scores[mask]
            if len(id_arr) == 0:
                return []
        n = len(id_arr)
        take = min(k, n)
        if n > PARTIAL_SELECT_CUTOFF and take < n:
            # Partial selection: find the take-th score, keep everything above
            # it, then fill remaining slots from the tied scores by low id.
            kth = np.partition(scores, n - take)[n - take]
            above = scores > kth
            need = take - int(above.sum())
            tied_ids = np.sort(id_arr[scores == kth])[:need]
            chosen = above | ((scores == kth) & np.isin(id_arr, tied_ids))
            sel_ids = id_arr[chosen]
            sel_scores = scores[chosen]
            order = np.lexsort((sel_ids, -sel_scores))
        else:
            order = np.lexsort((id_arr, -scores))[:take]
            sel_ids = id_arr
            sel_scores = scores
        return [
            RankedCandidate(int(sel_ids[i]), float(sel_scores[i])) for i in order
        ]

    def restrict(self, kept_ids) -> "VectorIndex":
        """A new index holding only the given ids (same vectors, same dim)."""
        sub = VectorIndex(self.dim)
        for triple_id in sorted(set(kept_ids)):
            pos = self._pos.get(triple_id)
            if pos is None:
                raise UnknownId(f"cannot restrict to missing id {triple_id}")
            sub.add(triple_id, self._rows[pos])
        return sub

    def save(self, path: str | Path) -> None:
        """Write one header line then one `id<TAB>components` line per entry.

        Components are printed with 17 significant digits, which round-trips
        64-bit floats exactly; saving a loaded index is byte-identical.
        """
        lines = [f"{INDEX_HEADER} {self.dim}"]
        for triple_id in sorted(self._ids):
            row = self._rows[self._pos[triple_id]]
            values = " ".join(f"{x:.17g}" for x in row)
            lines.append(f"{triple_id}\t{values}")
        try:
            Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot write index file {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot read index file {path}: {e}") from e
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or not lines[0].startswith(INDEX_HEADER + " "):
            raise CorruptFile(f"missing {INDEX_HEADER} header")
        try:
            dim = int(lines[0][len(INDEX_HEADER) + 1 :])
        except ValueError as e:
            raise CorruptFile("bad dimension in index header") from e
        index = cls(dim)
        for line_no, line in enumerate(lines[1:], start=2):
            head, sep, tail = line.partition("\t")
            if not sep:
                raise CorruptFile(f"index line {line_no} has no tab")
            try:
                triple_id = int(head)
                vector = [float(x) for x in tail.split(" ")] if tail else []
            except ValueError as e:
                raise CorruptFile(f"bad number on index line {line_no}") from e
            if triple_id < 0:
                raise CorruptFile(f"negative id on index line {line_no}")
            if len(vector) != dim:
                raise CorruptFile(
                    f"index line {line_no} has {len(vector)} components, expected {dim}"
                )
            if not all(math.isfinite(x) for x in vector):
                raise CorruptFile(f"non-finite component on index line {line_no}")
            if triple_id in index:
                raise CorruptFile(f"duplicate id {triple_id} on index line {line_no}")
            index.add(triple_id, vector)
        return index


def build_index(
    store: GraphStore, client: EmbeddingClient, parallel: int = 1
) -> VectorIndex:
    """Embed every stored triple; one entry per triple id.

    All vectors must share one dimension (InconsistentDimension otherwise).
    An empty store yields an empty index with the client's declared
    dimension when it has one.
    """
    triples = store.triples()
    vectors = run_parallel(
        lambda t: client.embed(triple_text(t)), triples, parallel
    )
    if vectors:
        dim = len(vectors[0])
    else:
        dim = getattr(client, "dim", 0)
    index = VectorIndex(dim)
    for t, vec in zip(triples, vectors):
        if len(vec) != dim:
            raise InconsistentDimension(
                f"embedding for triple {t.id} has length {len(vec)}, expected {dim}"
            )
        index.add(t.id, vec)
    return index
