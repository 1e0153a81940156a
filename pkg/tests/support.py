"""Shared generators and scripted clients for the test suite."""

import hashlib

from kgrag.clients import HashEmbedder
from kgrag.index import VectorIndex, triple_text
from kgrag.store import GraphStore, TripleDraft

RELATIONS = ["uses", "contains", "feeds", "drives", "limits", "creates", "supports"]


def make_random_store(rng, n_triples, n_entities=None):
    """A random store with dense adjacency and some repeated triple texts.

    Entity pools are kept small so most triples share endpoints, and some
    triples reuse an earlier (subject, relation, object) under a new context,
    which gives distinct ids identical embedding inputs (exact score ties).
    """
    if n_entities is None:
        n_entities = max(3, n_triples // 3)
    entities = [f"E{i}" for i in range(n_entities)]
    store = GraphStore()
    inserted = []
    while len(inserted) < n_triples:
        if inserted and rng.random() < 0.15:
            subject, relation, object_ = rng.choice(inserted)
        else:
            subject = rng.choice(entities)
            relation = rng.choice(RELATIONS)
            object_ = rng.choice(entities)
        context = f"ctx {len(inserted)}"
        store.insert_triple(TripleDraft(subject, relation, object_, context))
        inserted.append((subject, relation, object_))
    return store


def index_for_store(store, dim=8, seed=0, keep=None):
    """Index every stored triple (or just `keep`) with a hash embedder."""
    embedder = HashEmbedder(dim=dim, seed=seed)
    index = VectorIndex(dim)
    for t in store.triples():
        if keep is None or t.id in keep:
            index.add(t.id, embedder.embed(triple_text(t)))
    return index, embedder


def oracle_inputs(store, index):
    """(triples, vectors) in the shape the reference retriever expects."""
    triples = [(t.id, t.subject, t.object) for t in store.triples()]
    vectors = {i: [float(x) for x in index.vector(i)] for i in index.ids()}
    return triples, vectors


class LetterClient:
    """Deterministic generation stand-in: picks A-D from the prompt hash."""

    name = "scripted-letter"

    def complete(self, prompt: str) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        return "ABCD"[digest[0] % 4]


class MappedClient:
    """Serves canned replies keyed by exact prompt text."""

    name = "scripted-map"

    def __init__(self, replies: dict[str, str]):
        self._replies = dict(replies)

    def complete(self, prompt: str) -> str:
        return self._replies[prompt]


class FlakyClient:
    """Fails on chosen prompts, answers the rest; for failure-path tests."""

    name = "scripted-flaky"

    def __init__(self, inner, fail_when):
        self._inner = inner
        self._fail_when = fail_when

    def complete(self, prompt: str) -> str:
        if self._fail_when(prompt):
            from kgrag.errors import ClientFailure

            raise ClientFailure("scripted failure")
        return self._inner.complete(prompt)
