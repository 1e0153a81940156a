"""Command-line interface.

Subcommands mirror the pipeline stages: ingest documents into a graph store,
index the store, query it, and run the evaluation protocols. Summaries go to
stdout; durable outputs go to the files named by flags. With fixture clients
and a fixed --seed every subcommand is reproducible byte for byte.

Exit codes: 0 success, 1 domain error (bad input file, client failure),
2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import clients, evaluation, generation, ingest, retrieval
from .errors import KgragError
from .index import VectorIndex, build_index
from .store import GraphStore, format_triple_line

DOC_SUFFIXES = (".md", ".txt")


def _load_config(path: str | None) -> dict[str, str]:
    return clients.load_client_config(path) if path else {}


def _embedder(args) -> clients.EmbeddingClient:
    spec = args.embedder
    if spec == "hash":
        # Route the global seed into the offline embedder.
        return clients.HashEmbedder(seed=args.seed)
    return clients.make_embedding_client(spec, _load_config(args.config))


def _retrieval_config(args) -> retrieval.RetrievalConfig:
    try:
        return retrieval.RetrievalConfig(
            top_k=args.top_k, beam_width=args.beam, max_depth=args.depth
        )
    except ValueError as e:
        raise KgragError(str(e)) from e


def _pipeline(args) -> generation.Pipeline:
    store = GraphStore.load(args.store)
    index = VectorIndex.load(args.index)
    embedder = _embedder(args)
    generator = clients.make_completion_client(
        args.generator, _load_config(args.config)
    )
    return generation.Pipeline(
        store=store, index=index, embedder=embedder, generator=generator
    )


def cmd_ingest(args) -> int:
    docs = []
    root = Path(args.docs)
    if not root.is_dir():
        raise KgragError(f"document directory {root} does not exist")
    for path in sorted(root.iterdir()):
        if path.suffix.lower() in DOC_SUFFIXES and path.is_file():
            docs.append(ingest.Document(doc_id=path.name, body=path.read_text("utf-8")))
    client = clients.make_completion_client(
        args.client, _load_config(args.config), purpose="extraction"
    )
    if args.cache_dir:
        client = clients.CachingClient(client, args.cache_dir)
    store = ingest.build_graph(docs, client, parallel=args.parallel)
    store.persist(args.out)
    triples, entities, relations = store.stats()
    print(f"triples={triples} entities={entities} relations={relations}")
    return 0


def cmd_index(args) -> int:
    store = GraphStore.load(args.store)
    index = build_index(store, _embedder(args), parallel=args.parallel)
    index.save(args.out)
    print(f"entries={len(index)} dim={index.dim}")
    return 0


def cmd_query(args) -> int:
    pipe = _pipeline(args)
    cfg = _retrieval_config(args)
    ans = generation.answer(args.question, cfg, pipe)
    if args.show_prompt:
        print("--- prompt ---")
        print(ans.prompt.full_text)
        print("--- end prompt ---")
    if args.show_evidence:
        print("--- evidence ---")
        for triple, score in ans.evidence.items:
            line = format_triple_line(
                triple.subject, triple.relation, triple.object, triple.context
            )
            print(f"{triple.id}\t{score:.9f}\t{line}")
        print("--- end evidence ---")
    if args.trace_out:
        _, trace = retrieval.retrieve(
            args.question, cfg, pipe.store, pipe.index, pipe.embedder
        )
        Path(args.trace_out).write_text(
            retrieval.format_trace(trace, pipe.store) + "\n", encoding="utf-8"
        )
    print(ans.raw_text)
    return 0


def _print_aggregates(aggregates: dict, failures: int) -> None:
    parts = []
    for key in evaluation.AGGREGATE_KEYS:
        value = aggregates.get(key)
        parts.append(f"{key}=" + ("n/a" if value is None else f"{value:.6f}"))
    parts.append(f"failures={failures}")
    print(" ".join(parts))


def cmd_eval(args) -> int:
    questions = evaluation.load_questions(args.questions)
    pipe = _pipeline(args)
    cfg = _retrieval_config(args)
    report = evaluation.run_benchmark(
        questions,
        cfg,
        pipe,
        metadata={"seed": args.seed},
        parallel=args.parallel,
    )
    evaluation.save_report(report, args.out)
    _print_aggregates(report.aggregates, report.failures)
    return 0


def _int_list(raw: str) -> list[int]:
    try:
        return [int(x) for x in raw.split(",") if x != ""]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {raw!r}") from e


def _float_list(raw: str) -> list[float]:
    try:
        return [float(x) for x in raw.split(",") if x != ""]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {raw!r}") from e


def cmd_sweep(args) -> int:
    questions = evaluation.load_questions(args.questions)
    pipe = _pipeline(args)
    reports = evaluation.sweep(
        questions,
        args.top_k_values,
        args.depth_values,
        args.beam,
        pipe,
        metadata={"seed": args.seed},
        parallel=args.parallel,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (k, depth), report in reports.items():
        evaluation.save_report(report, out_dir / f"cell_k{k}_d{depth}.jsonl")
    grid = evaluation.sweep_grid_rows(reports)
    (out_dir / "grid.tsv").write_text("\n".join(grid) + "\n", encoding="utf-8")
    for line in grid:
        print(line)
    return 0


def cmd_ablate(args) -> int:
    questions = evaluation.load_questions(args.questions)
    pipe = _pipeline(args)
    cfg = _retrieval_config(args)
    result = evaluation.ablation(
        questions,
        args.fractions,
        args.repeats,
        args.seed,
        cfg,
        pipe,
        parallel=args.parallel,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (fraction, repeat), report in result.reports.items():
        evaluation.save_report(report, out_dir / f"cell_f{fraction:g}_r{repeat}.jsonl")
    grid = evaluation.ablation_grid_rows(result)
    (out_dir / "grid.tsv").write_text("\n".join(grid) + "\n", encoding="utf-8")
    for line in grid:
        print(line)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="seed for all stochastic components (subgraph draws, hash embedder)",
    )
    parser.add_argument(
        "--config", help="key=value client config file (endpoints, models, limits)"
    )
    parser.add_argument(
        "--parallel", type=int, default=1, help="max concurrent client requests"
    )


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--store", required=True, help="graph store file")
    parser.add_argument("--index", required=True, help="embedding index file")
    parser.add_argument(
        "--embedder",
        default="hash",
        help="embedding client: http, hash, or fixture:DIR",
    )
    parser.add_argument(
        "--generator",
        default="http",
        help="generation client: http, echo, or fixture:DIR",
    )
    parser.add_argument("--top-k", type=int, default=5, help="seed pool size")
    parser.add_argument("--beam", type=int, default=3, help="beam width per expansion")
    parser.add_argument("--depth", type=int, default=1, help="max expansion depth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgrag",
        description="Build a knowledge graph from documents and answer questions over it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract triples from documents into a store")
    p.add_argument("--docs", required=True, help="directory of .md/.txt documents")
    p.add_argument("--out", required=True, help="output store file")
    p.add_argument(
        "--client",
        default="http",
        help="extraction client: http or fixture:DIR",
    )
    p.add_argument(
        "--cache-dir", help="cache extraction responses here (fixture format)"
    )
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("index", help="embed every stored triple")
    p.add_argument("--store", required=True, help="graph store file")
    p.add_argument("--out", required=True, help="output index file")
    p.add_argument(
        "--embedder",
        default="hash",
        help="embedding client: http, hash, or fixture:DIR",
    )
    _add_common(p)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("query", help="answer one question")
    p.add_argument("question", help="question text")
    _add_pipeline_flags(p)
    p.add_argument(
        "--show-evidence", action="store_true", help="print retrieved triples"
    )
    p.add_argument(
        "--show-prompt", action="store_true", help="print the compiled prompt"
    )
    p.add_argument("--trace-out", help="write the traversal trace to this file")
    _add_common(p)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("eval", help="run a question set and write a report")
    p.add_argument("--questions", required=True, help="JSONL question file")
    p.add_argument("--out", required=True, help="output report file (JSONL)")
    _add_pipeline_flags(p)
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate over a (top-k, depth) grid")
    p.add_argument("--questions", required=True, help="JSONL question file")
    p.add_argument("--out-dir", required=True, help="directory for cell reports")
    p.add_argument(
        "--top-k-values",
        type=_int_list,
        required=True,
        help="comma-separated top-k grid, e.g. 0,5,10",
    )
    p.add_argument(
        "--depth-values",
        type=_int_list,
        required=True,
        help="comma-separated depth grid, e.g. 0,1,2",
    )
    p.add_argument("--beam", type=int, default=3, help="beam width per expansion")
    p.add_argument("--store", required=True, help="graph store file")
    p.add_argument("--index", required=True, help="embedding index file")
    p.add_argument(
        "--embedder", default="hash", help="embedding client: http, hash, or fixture:DIR"
    )
    p.add_argument(
        "--generator", default="http", help="generation client: http, echo, or fixture:DIR"
    )
    _add_common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("ablate", help="evaluate on random subgraphs")
    p.add_argument("--questions", required=True, help="JSONL question file")
    p.add_argument("--out-dir", required=True, help="directory for cell reports")
    p.add_argument(
        "--fractions",
        type=_float_list,
        default=[0.0, 0.25, 0.5, 0.75, 1.0],
        help="comma-separated graph fractions",
    )
    p.add_argument("--repeats", type=int, default=10, help="repeats per fraction")
    _add_pipeline_flags(p)
    _add_common(p)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (KgragError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
