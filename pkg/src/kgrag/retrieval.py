"""Query-time retrieval: top-K seeding plus beam expansion over the graph.

The query is embedded once; the same vector scores every candidate at every
depth. Seeds are the top-K triples by cosine score. Each depth expands every
frontier triple to its graph neighbors (triples sharing an entity), keeps the
best `beam_width` per frontier triple, unions them, and never revisits a
triple returned at an earlier depth. The evidence set is the union over all
depths, ordered by score descending then id ascending.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clients import EmbeddingClient
from .errors import UnknownId
from .index import RankedCandidate, VectorIndex
from .store import GraphStore, Triple


@dataclass(frozen=True)
class RetrievalConfig:
    """Knobs for one retrieval run.

    top_k: seed pool size (0 disables retrieval entirely).
    beam_width: neighbors kept per frontier triple per depth.
    max_depth: expansion depths after the seed pool (0 = seeds only).
    """

    top_k: int = 5
    beam_width: int = 3
    max_depth: int = 1

    def __post_init__(self):
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass(frozen=True)
class EvidenceSet:
    """Retrieved triples with scores, ordered score desc then id asc."""

    items: tuple[tuple[Triple, float], ...]
    query_echo: str = ""

    def ids(self) -> list[int]:
        return [t.id for t, _ in self.items]


@dataclass
class TraversalTrace:
    """Per-depth frontiers (index = depth) and visit order, for debugging."""

    frontiers: list[list[RankedCandidate]] = field(default_factory=list)
    visited: tuple[int, ...] = ()


def expand_once(
    frontier: list[RankedCandidate],
    visited: set[int],
    query_vec,
    beam_width: int,
    store: GraphStore,
    index: VectorIndex,
) -> list[RankedCandidate]:
    """One expansion depth.

    Every frontier triple contributes its best `beam_width` unvisited
    neighbors by query score (ties to the lower id); contributions are
    unioned, so a triple reachable from several parents appears once. The
    visited set is read as of entry and all returned ids are added to it.
    Neighbors without an index entry are ignored, which is what restricts
    expansion to a subgraph when the index was built on one.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    if not frontier:
        return []
    scores = index.scores_for(query_vec)
    chosen: dict[int, RankedCandidate] = {}
    for parent in frontier:
        ranked: list[tuple[float, int]] = []
        for neighbor in store.get_adjacent(parent.id):
            if neighbor in visited:
                continue
            pos = index.position_of(neighbor)
            if pos is None:
                continue
            ranked.append((-float(scores[pos]), neighbor))
        ranked.sort()
        for neg_score, neighbor in ranked[:beam_width]:
            if neighbor not in chosen:
                chosen[neighbor] = RankedCandidate(neighbor, -neg_score)
    out = sorted(chosen.values(), key=lambda c: (-c.score, c.id))
    visited.update(c.id for c in out)
    return out


def attach_context(
    candidates: list[RankedCandidate],
    store: GraphStore,
    query_echo: str = "",
) -> EvidenceSet:
    """Resolve candidate ids to full triples, enforcing evidence order."""
    ordered = sorted(candidates, key=lambda c: (-c.score, c.id))
    items = tuple((store.get_triple(c.id), c.score) for c in ordered)
    return EvidenceSet(items=items, query_echo=query_echo)


def retrieve(
    query_text: str,
    cfg: RetrievalConfig,
    store: GraphStore,
    index: VectorIndex,
    embedder: EmbeddingClient,
) -> tuple[EvidenceSet, TraversalTrace]:
    """Full retrieval: embed, seed top-K, expand max_depth times, union.

    top_k of 0 returns empty evidence regardless of the other settings. The
    trace always has max_depth + 1 frontiers; depths past graph exhaustion
    are empty lists.
    """
    query_vec = np.asarray(embedder.embed(query_text), dtype=np.float64)
    seeds = index.top_k(query_vec, cfg.top_k)
    visited: set[int] = {c.id for c in seeds}
    visit_order: list[int] = [c.id for c in seeds]
    frontiers: list[list[RankedCandidate]] = [list(seeds)]
    frontier = list(seeds)
    for _ in range(cfg.max_depth):
        frontier = expand_once(
            frontier, visited, query_vec, cfg.beam_width, store, index
        )
        frontiers.append(frontier)
        visit_order.extend(c.id for c in frontier)
    # Depths are disjoint (returned ids become visited), so the union over
    # depths is just the concatenation.
    union = [c for level in frontiers for c in level]
    evidence = attach_context(union, store, query_echo=query_text)
    trace = TraversalTrace(frontiers=frontiers, visited=tuple(visit_order))
    return evidence, trace


def format_trace(trace: TraversalTrace, store: GraphStore) -> str:
    """Line-oriented trace dump: depth, id, score, subject, relation, object."""
    lines = []
    for depth, level in enumerate(trace.frontiers):
        for cand in level:
            try:
                t = store.get_triple(cand.id)
                fields = (t.subject, t.relation, t.object)
            except UnknownId:
                fields = ("?", "?", "?")
            lines.append(
                f"{depth}\t{cand.id}\t{cand.score:.9f}\t"
                f"{fields[0]}\t{fields[1]}\t{fields[2]}"
            )
    return "\n".join(lines)
