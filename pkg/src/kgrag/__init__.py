"""Knowledge-graph construction and graph-guided retrieval for document QA.

Pipeline: documents are split into paragraphs, an LLM extracts
subject/relation/object triples with their source sentences, the triples go
into a three-table graph store, every triple is embedded, and queries are
answered by seeding on the top-K most similar triples, beam-expanding through
the graph, and prompting a generator with the retrieved evidence.
"""

from .clients import (
    CachingClient,
    EchoClient,
    FixtureCompletionClient,
    FixtureEmbeddingClient,
    HashEmbedder,
    HttpCompletionClient,
    HttpEmbeddingClient,
    load_client_config,
)
from .errors import (
    BadFraction,
    ClientFailure,
    CorruptFile,
    DimensionMismatch,
    EmptyField,
    InconsistentDimension,
    IoFailure,
    KgragError,
    LengthMismatch,
    UnknownId,
)
from .evaluation import (
    QuestionRecord,
    ablation,
    grade_mc,
    load_questions,
    rouge_l,
    rouge_n,
    run_benchmark,
    semantic_similarity,
    sweep,
)
from .generation import Pipeline, answer, compile_prompt, parse_choice
from .index import VectorIndex, build_index, cosine_sim, triple_text
from .ingest import Document, build_graph, extract_document, parse_triple_lines, split_paragraphs
from .retrieval import EvidenceSet, RetrievalConfig, retrieve
from .store import GraphStore, SubgraphSample, Triple, TripleDraft, normalize_entity

__version__ = "0.1.0"
