"""Evaluation harness: text metrics, grading, and benchmark protocols.

Open-ended answers are scored with ROUGE-1/2/L and embedding cosine
similarity against a grounded reference; multiple-choice answers are parsed
to a letter and graded for accuracy and macro F1. The ablation protocol
reruns the benchmark on random subgraphs of decreasing size.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import mean
from typing import Sequence

from .clients import EmbeddingClient, run_parallel
from .errors import ClientFailure, CorruptFile, IoFailure, LengthMismatch
from .generation import Pipeline, answer
from .index import cosine_sim
from .retrieval import RetrievalConfig

MC_CLASSES = ("A", "B", "C", "D", "ABSTAIN")
AGGREGATE_KEYS = ("accuracy", "f1", "rouge1", "rouge2", "rougeL", "semantic_similarity")


def tokenize(text: str) -> list[str]:
    """Unicode lowercase, punctuation to spaces, split on whitespace."""
    lowered = text.lower()
    cleaned = "".join(
        " " if unicodedata.category(c).startswith("P") else c for c in lowered
    )
    return cleaned.split()


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap. Either side empty scores zero."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = tokenize(candidate)
    ref = tokenize(reference)
    cand_grams = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
    ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    total_cand = sum(cand_grams.values())
    total_ref = sum(ref_grams.values())
    if total_cand == 0 or total_ref == 0:
        return RougeScore(0.0, 0.0, 0.0)
    overlap = sum((cand_grams & ref_grams).values())
    precision = overlap / total_cand
    recall = overlap / total_ref
    return RougeScore(precision, recall, _f1(precision, recall))


def _lcs_length(a: list[str], b: list[str]) -> int:
    # One-row DP over the shorter second sequence.
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(current[-1], prev[j]))
        prev = current
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence overlap on tokens."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return RougeScore(precision, recall, _f1(precision, recall))


def semantic_similarity(
    candidate: str, reference: str, embedder: EmbeddingClient
) -> float:
    """Cosine similarity of the two texts' embeddings."""
    return cosine_sim(embedder.embed(candidate), embedder.embed(reference))


def grade_mc(
    parsed: Sequence[str | None], keys: Sequence[str]
) -> tuple[float, float]:
    """(accuracy, macro F1) for parsed letters against answer keys.

    A missing parse counts as ABSTAIN, which is always wrong. Macro F1
    averages one-vs-rest F1 over the five fixed classes A/B/C/D/ABSTAIN; a
    class with no predictions and no keys contributes 0.
    """
    if len(parsed) != len(keys):
        raise LengthMismatch(f"{len(parsed)} answers vs {len(keys)} keys")
    if not keys:
        raise ValueError("cannot grade an empty batch")
    for key in keys:
        if key not in ("A", "B", "C", "D"):
            raise ValueError(f"answer key must be A-D, got {key!r}")
    labels = [p if p in ("A", "B", "C", "D") else "ABSTAIN" for p in parsed]
    correct = sum(1 for label, key in zip(labels, keys) if label == key)
    accuracy = correct / len(keys)
    f1_total = 0.0
    for cls in MC_CLASSES:
        tp = sum(1 for label, key in zip(labels, keys) if label == cls and key == cls)
        fp = sum(1 for label, key in zip(labels, keys) if label == cls and key != cls)
        fn = sum(1 for label, key in zip(labels, keys) if label != cls and key == cls)
        denom = 2 * tp + fp + fn
        f1_total += (2 * tp / denom) if denom else 0.0
    return accuracy, f1_total / len(MC_CLASSES)


@dataclass(frozen=True)
class QuestionRecord:
    """One benchmark question.

    kind is multiple_choice (options A-D plus answer_key) or open_ended
    (grounded_answer). category tags what the question exercises.
    """

    qid: str
    kind: str
    category: str
    text: str
    options: dict[str, str] | None = None
    answer_key: str | None = None
    grounded_answer: str | None = None

    def __post_init__(self):
        if self.kind not in ("multiple_choice", "open_ended"):
            raise ValueError(f"bad kind {self.kind!r} for question {self.qid}")
        if self.category not in ("content_specific", "machining_specific"):
            raise ValueError(f"bad category {self.category!r} for question {self.qid}")
        if not self.text.strip():
            raise ValueError(f"question {self.qid} has empty text")
        if self.kind == "multiple_choice":
            if self.options is None or sorted(self.options) != ["A", "B", "C", "D"]:
                raise ValueError(f"question {self.qid} needs options A-D")
            if self.answer_key not in ("A", "B", "C", "D"):
                raise ValueError(f"question {self.qid} needs an A-D answer key")
        else:
            if not (self.grounded_answer or "").strip():
                raise ValueError(f"question {self.qid} needs a grounded answer")


def load_questions(path: str | Path) -> list[QuestionRecord]:
    """Read a JSONL question file, validating every record."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read question file {path}: {e}") from e
    questions = []
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorruptFile(f"question line {line_no} is not JSON: {e}") from e
        if not isinstance(record, dict):
            raise CorruptFile(f"question line {line_no} is not an object")
        try:
            questions.append(
                QuestionRecord(
                    qid=record["qid"],
                    kind=record["kind"],
                    category=record["category"],
                    text=record["text"],
                    options=record.get("options"),
                    answer_key=record.get("answer_key"),
                    grounded_answer=record.get("grounded_answer"),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptFile(f"bad question on line {line_no}: {e}") from e
    return questions


def render_question(q: QuestionRecord) -> str:
    """Query text sent to the pipeline; options are listed for MC questions."""
    if q.kind == "multiple_choice":
        lines = [q.text]
        for letter in ("A", "B", "C", "D"):
            lines.append(f"{letter}. {q.options[letter]}")
        return "\n".join(lines)
    return q.text


@dataclass(frozen=True)
class EvalRow:
    """Per-question outcome, with full retrieval provenance."""

    qid: str
    kind: str
    category: str
    raw_text: str | None
    parsed_choice: str | None
    answer_key: str | None
    correct: bool | None
    scores: dict[str, float]
    evidence: list[tuple[int, float]]
    error: str | None = None


@dataclass
class EvalReport:
    rows: list[EvalRow]
    aggregates: dict[str, float | None]
    metadata: dict
    failures: int


def _aggregate(rows: list[EvalRow]) -> tuple[dict[str, float | None], int]:
    mc = [r for r in rows if r.kind == "multiple_choice" and r.error is None]
    open_rows = [r for r in rows if r.kind == "open_ended" and r.error is None]
    aggregates: dict[str, float | None] = {key: None for key in AGGREGATE_KEYS}
    if mc:
        accuracy, f1 = grade_mc(
            [r.parsed_choice for r in mc], [r.answer_key for r in mc]
        )
        aggregates["accuracy"] = accuracy
        aggregates["f1"] = f1
    if open_rows:
        for key in ("rouge1", "rouge2", "rougeL", "semantic_similarity"):
            aggregates[key] = mean(r.scores[key] for r in open_rows)
    failures = sum(1 for r in rows if r.error is not None)
    return aggregates, failures


def run_benchmark(
    questions: list[QuestionRecord],
    cfg: RetrievalConfig,
    pipe: Pipeline,
    metadata: dict | None = None,
    parallel: int = 1,
) -> EvalReport:
    """Answer and score every question.

    A client failure on one question is recorded in its row and excluded
    from the aggregates; it never aborts the run. Aggregates for a kind with
    no questions stay None. Rows keep question order regardless of
    parallelism.
    """
    if not questions:
        raise ValueError("question list is empty")

    def run_one(q: QuestionRecord) -> EvalRow:
        is_mc = q.kind == "multiple_choice"
        try:
            ans = answer(render_question(q), cfg, pipe, multiple_choice=is_mc)
        except ClientFailure as e:
            return EvalRow(
                qid=q.qid,
                kind=q.kind,
                category=q.category,
                raw_text=None,
                parsed_choice=None,
                answer_key=q.answer_key,
                correct=None,
                scores={},
                evidence=[],
                error=str(e),
            )
        evidence = [(t.id, score) for t, score in ans.evidence.items]
        if is_mc:
            return EvalRow(
                qid=q.qid,
                kind=q.kind,
                category=q.category,
                raw_text=ans.raw_text,
                parsed_choice=ans.choice,
                answer_key=q.answer_key,
                correct=ans.choice == q.answer_key,
                scores={},
                evidence=evidence,
            )
        scores = {
            "rouge1": rouge_n(ans.raw_text, q.grounded_answer, 1).f1,
            "rouge2": rouge_n(ans.raw_text, q.grounded_answer, 2).f1,
            "rougeL": rouge_l(ans.raw_text, q.grounded_answer).f1,
            "semantic_similarity": semantic_similarity(
                ans.raw_text, q.grounded_answer, pipe.embedder
            ),
        }
        return EvalRow(
            qid=q.qid,
            kind=q.kind,
            category=q.category,
            raw_text=ans.raw_text,
            parsed_choice=None,
            answer_key=None,
            correct=None,
            scores=scores,
            evidence=evidence,
        )

    rows = run_parallel(run_one, questions, parallel)
    aggregates, failures = _aggregate(rows)
    meta = dict(metadata or {})
    meta.setdefault("top_k", cfg.top_k)
    meta.setdefault("beam_width", cfg.beam_width)
    meta.setdefault("max_depth", cfg.max_depth)
    meta.setdefault("embedder", pipe.embedder.name)
    meta.setdefault("generator", pipe.generator.name)
    return EvalReport(rows=rows, aggregates=aggregates, metadata=meta, failures=failures)


def save_report(report: EvalReport, path: str | Path) -> None:
    """Write rows then a summary record as JSONL; stable byte-for-byte."""
    lines = []
    for row in report.rows:
        payload = {
            "type": "row",
            "qid": row.qid,
            "kind": row.kind,
            "category": row.category,
            "raw_text": row.raw_text,
            "parsed_choice": row.parsed_choice,
            "answer_key": row.answer_key,
            "correct": row.correct,
            "scores": row.scores,
            "evidence": [[i, s] for i, s in row.evidence],
            "error": row.error,
        }
        lines.append(json.dumps(payload, sort_keys=True, ensure_ascii=False))
    summary = {
        "type": "summary",
        "aggregates": report.aggregates,
        "metadata": report.metadata,
        "failures": report.failures,
    }
    lines.append(json.dumps(summary, sort_keys=True, ensure_ascii=False))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write report file {path}: {e}") from e


def load_report(path: str | Path) -> EvalReport:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read report file {path}: {e}") from e
    rows: list[EvalRow] = []
    summary = None
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorruptFile(f"report line {line_no} is not JSON: {e}") from e
        if not isinstance(record, dict):
            raise CorruptFile(f"report line {line_no} is not an object")
        if record.get("type") == "summary":
            summary = record
        elif record.get("type") == "row":
            try:
                rows.append(
                    EvalRow(
                        qid=record["qid"],
                        kind=record["kind"],
                        category=record["category"],
                        raw_text=record["raw_text"],
                        parsed_choice=record["parsed_choice"],
                        answer_key=record["answer_key"],
                        correct=record["correct"],
                        scores=record["scores"],
                        evidence=[(i, s) for i, s in record["evidence"]],
                        error=record["error"],
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise CorruptFile(f"bad report row on line {line_no}: {e}") from e
        else:
            raise CorruptFile(f"report line {line_no} has unknown type")
    if summary is None:
        raise CorruptFile("report has no summary record")
    return EvalReport(
        rows=rows,
        aggregates=summary["aggregates"],
        metadata=summary["metadata"],
        failures=summary["failures"],
    )


def sweep(
    questions: list[QuestionRecord],
    k_values: Sequence[int],
    depth_values: Sequence[int],
    beam_width: int,
    pipe: Pipeline,
    metadata: dict | None = None,
    parallel: int = 1,
) -> dict[tuple[int, int], EvalReport]:
    """Benchmark every (top_k, max_depth) grid cell.

    K=0 cells are depth-independent (no seeds means no expansion), so the
    first one is computed and the rest replicate its rows and aggregates.
    """
    if not k_values or not depth_values:
        raise ValueError("sweep grids must be non-empty")
    reports: dict[tuple[int, int], EvalReport] = {}
    zero_cell: EvalReport | None = None
    for k in k_values:
        for depth in depth_values:
            if k == 0 and zero_cell is not None:
                meta = dict(zero_cell.metadata)
                meta["max_depth"] = depth
                reports[(k, depth)] = EvalReport(
                    rows=zero_cell.rows,
                    aggregates=dict(zero_cell.aggregates),
                    metadata=meta,
                    failures=zero_cell.failures,
                )
                continue
            cfg = RetrievalConfig(top_k=k, beam_width=beam_width, max_depth=depth)
            cell_meta = dict(metadata or {})
            report = run_benchmark(
                questions, cfg, pipe, metadata=cell_meta, parallel=parallel
            )
            reports[(k, depth)] = report
            if k == 0:
                zero_cell = report
    return reports


def sweep_grid_rows(reports: dict[tuple[int, int], EvalReport]) -> list[str]:
    """Tab-separated grid export, one line per cell, sorted by (K, depth)."""
    header = "top_k\tdepth\t" + "\t".join(AGGREGATE_KEYS) + "\tfailures"
    lines = [header]
    for (k, depth) in sorted(reports):
        report = reports[(k, depth)]
        values = "\t".join(_format_metric(report.aggregates[key]) for key in AGGREGATE_KEYS)
        lines.append(f"{k}\t{depth}\t{values}\t{report.failures}")
    return lines


def _format_metric(value: float | None) -> str:
    return "" if value is None else repr(float(value))


@dataclass
class AblationResult:
    """Per-(fraction, repeat) reports plus per-fraction metric means."""

    reports: dict[tuple[float, int], EvalReport]
    means: dict[float, dict[str, float | None]]


def ablation(
    questions: list[QuestionRecord],
    fractions: Sequence[float],
    repeats: int,
    base_seed: int,
    cfg: RetrievalConfig,
    pipe: Pipeline,
    parallel: int = 1,
) -> AblationResult:
    """Benchmark on random subgraphs of the store.

    Repeat r of any fraction uses seed base_seed + r, so runs are
    reproducible and fractions share their draws. The index is restricted to
    the sampled triple ids; nothing is re-embedded. Fraction 1.0 keeps
    everything; fraction 0.0 degenerates to the no-retrieval baseline.
    """
    if not fractions:
        raise ValueError("fractions must be non-empty")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    reports: dict[tuple[float, int], EvalReport] = {}
    for fraction in fractions:
        for repeat in range(repeats):
            seed = base_seed + repeat
            sample = pipe.store.sample_subgraph(fraction, seed)
            sub_index = pipe.index.restrict(sample.kept_ids)
            sub_pipe = replace(pipe, index=sub_index)
            metadata = {
                "graph_fraction": fraction,
                "repeat": repeat,
                "seed": seed,
                "kept_triples": len(sample.kept_ids),
            }
            reports[(fraction, repeat)] = run_benchmark(
                questions, cfg, sub_pipe, metadata=metadata, parallel=parallel
            )
    means: dict[float, dict[str, float | None]] = {}
    for fraction in fractions:
        cells = [reports[(fraction, r)] for r in range(repeats)]
        means[fraction] = {
            key: (
                mean(c.aggregates[key] for c in cells)
                if all(c.aggregates[key] is not None for c in cells)
                else None
            )
            for key in AGGREGATE_KEYS
        }
    return AblationResult(reports=reports, means=means)


def ablation_grid_rows(result: AblationResult) -> list[str]:
    """Tab-separated export: every cell, then one mean line per fraction."""
    header = "fraction\trepeat\t" + "\t".join(AGGREGATE_KEYS) + "\tfailures"
    lines = [header]
    for (fraction, repeat) in sorted(result.reports):
        report = result.reports[(fraction, repeat)]
        values = "\t".join(_format_metric(report.aggregates[key]) for key in AGGREGATE_KEYS)
        lines.append(f"{fraction:g}\t{repeat}\t{values}\t{report.failures}")
    for fraction in sorted(result.means):
        values = "\t".join(
            _format_metric(result.means[fraction][key]) for key in AGGREGATE_KEYS
        )
        lines.append(f"{fraction:g}\tmean\t{values}\t")
    return lines
