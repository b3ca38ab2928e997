"""BEIR-format dataset loading, ranking metrics, and the eval harness.

Datasets follow the BEIR directory convention: ``corpus.jsonl`` and
``queries.jsonl`` (records with ``_id``/``title``/``text``), plus a qrels
TSV with ``query-id<TAB>corpus-id<TAB>score`` rows (header tolerated).

NDCG uses the exponential-gain convention of the benchmark tooling:
gain 2^grade - 1, discount 1/log2(rank + 1) with rank starting at 1, and
the ideal DCG computed over the query's full set of judged documents.
Queries without a positive grade are excluded from metric averages.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .augmentation import AugmentationRecord
from .config import ScorerConfig
from .index import InvertedIndex, build_index, read_corpus_jsonl
from .pipeline import PipelineConfig
from .retrieval import AugmentedQuerySet, search_topk, search_wqa

logger = logging.getLogger(__name__)

Qrels = dict[str, dict[str, int]]


class DatasetError(Exception):
    pass


class EvalError(Exception):
    pass


@dataclass
class BeirDataset:
    corpus: list[tuple[str, str]]
    queries: dict[str, str]
    qrels: Qrels
    warnings: list[str] = field(default_factory=list)
    name: str = ""


def load_beir_dataset(dir_path: str, qrels_file: str | None = None) -> BeirDataset:
    """Load a BEIR-layout directory.

    ``qrels_file`` defaults to ``qrels/test.tsv`` under the directory.
    Dangling qrels ids (unknown query or document) are skipped with a
    warning rather than failing the load.
    """
    corpus_path = os.path.join(dir_path, "corpus.jsonl")
    queries_path = os.path.join(dir_path, "queries.jsonl")
    if qrels_file is None:
        qrels_file = os.path.join(dir_path, "qrels", "test.tsv")
    for path, label in (
        (corpus_path, "corpus.jsonl"),
        (queries_path, "queries.jsonl"),
        (qrels_file, "qrels file"),
    ):
        if not os.path.exists(path):
            raise DatasetError(f"missing {label}: {path}")

    corpus = list(read_corpus_jsonl(corpus_path))
    corpus_ids = {ext for ext, _ in corpus}

    queries: dict[str, str] = {}
    with open(queries_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(
                    f"{queries_path}:{line_no}: invalid JSON: {exc}"
                ) from exc
            if "_id" not in record or "text" not in record:
                raise DatasetError(
                    f"{queries_path}:{line_no}: need '_id' and 'text' fields"
                )
            queries[str(record["_id"])] = str(record["text"])

    qrels: Qrels = {}
    warnings: list[str] = []
    with open(qrels_file, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if line_no == 1 and fields[:2] == ["query-id", "corpus-id"]:
                continue  # header
            if len(fields) != 3:
                raise DatasetError(
                    f"{qrels_file}:{line_no}: expected 3 tab-separated fields, "
                    f"got {len(fields)}"
                )
            qid, doc_id, grade_text = fields
            try:
                grade = int(grade_text)
            except ValueError as exc:
                raise DatasetError(
                    f"{qrels_file}:{line_no}: grade {grade_text!r} is not an integer"
                ) from exc
            if grade < 0:
                raise DatasetError(f"{qrels_file}:{line_no}: negative grade {grade}")
            if qid not in queries:
                warnings.append(f"qrels: unknown query id {qid!r} (line {line_no})")
                continue
            if doc_id not in corpus_ids:
                warnings.append(f"qrels: unknown corpus id {doc_id!r} (line {line_no})")
                continue
            qrels.setdefault(qid, {})[doc_id] = grade
    for message in warnings:
        logger.warning("%s: %s", dir_path, message)

    return BeirDataset(
        corpus=corpus,
        queries=queries,
        qrels=qrels,
        warnings=warnings,
        name=os.path.basename(os.path.normpath(dir_path)),
    )


# -- metrics ----------------------------------------------------------------


def _dcg(grades: Sequence[int]) -> float:
    return sum(
        (2.0**g - 1.0) / math.log2(rank + 1.0)
        for rank, g in enumerate(grades, start=1)
    )


def ndcg_at_k(ranked: Sequence[str], qrels_for_query: Mapping[str, int], k: int) -> float:
    """NDCG@k of a ranked id list against one query's judgments."""
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    ideal = sorted(qrels_for_query.values(), reverse=True)[:k]
    if not ideal or ideal[0] <= 0:
        raise EvalError("query has no positive relevance grade; exclude it")
    gains = [qrels_for_query.get(doc_id, 0) for doc_id in ranked[:k]]
    return _dcg(gains) / _dcg(ideal)


def recall_at_k(
    ranked: Sequence[str], qrels_for_query: Mapping[str, int], k: int
) -> float:
    """Fraction of relevant (grade >= 1) documents found in the top k."""
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    relevant = {doc_id for doc_id, grade in qrels_for_query.items() if grade >= 1}
    if not relevant:
        raise EvalError("query has no positive relevance grade; exclude it")
    return len(relevant.intersection(ranked[:k])) / len(relevant)


# -- harness ----------------------------------------------------------------


@dataclass
class QueryResult:
    query_id: str
    ndcg: float
    recall: float


@dataclass
class EvalRun:
    dataset: str
    algo: str
    k: int
    per_query: list[QueryResult]
    ndcg: float
    recall: float
    config_snapshot: dict
    index_seconds: float
    search_seconds: float
    query_mean_ms: float
    failures: list[tuple[str, str]] = field(default_factory=list)
    skipped_no_positive: int = 0


def evaluate_index(
    index: InvertedIndex,
    queries: Mapping[str, str],
    qrels: Qrels,
    config: ScorerConfig,
    k: int = 10,
    wqa: Mapping[str, Sequence[str] | AugmentationRecord] | None = None,
    wqa_weight: float = 0.5,
    workers: int = 0,
    dataset_name: str = "",
) -> EvalRun:
    """Evaluate all positively-judged queries against a prebuilt index.

    ``wqa`` maps query text to augmented query strings (or full
    AugmentationRecords, whose per-query weights then override
    ``wqa_weight``); queries missing from the map fall back to plain
    search. ``workers=0`` picks a pool size automatically, 1 forces
    single-threaded execution.
    """
    eligible = [
        (qid, queries[qid])
        for qid in sorted(qrels)
        if any(grade > 0 for grade in qrels[qid].values())
    ]
    skipped = len(qrels) - len(eligible)

    def run_one(item: tuple[str, str]) -> tuple[str, list[str] | None, str | None]:
        qid, text = item
        try:
            if wqa is not None and text in wqa:
                entry = wqa[text]
                if isinstance(entry, AugmentationRecord):
                    pairs = entry.weighted(wqa_weight)
                else:
                    pairs = tuple((q, wqa_weight) for q in entry)
                aug = AugmentedQuerySet(original=text, augmented=pairs)
                hits = search_wqa(aug, k, index, config)
            else:
                hits = search_topk(text, k, index, config)
            return qid, [hit.external_id for hit in hits], None
        except Exception as exc:
            return qid, None, f"{type(exc).__name__}: {exc}"

    search_start = time.perf_counter()
    if workers == 1 or len(eligible) < 2:
        outcomes = [run_one(item) for item in eligible]
    else:
        pool_size = workers if workers > 0 else 8
        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            outcomes = list(pool.map(run_one, eligible))
    search_seconds = time.perf_counter() - search_start

    per_query: list[QueryResult] = []
    failures: list[tuple[str, str]] = []
    for qid, ranked, error in outcomes:
        if error is not None:
            failures.append((qid, error))
            continue
        per_query.append(
            QueryResult(
                query_id=qid,
                ndcg=ndcg_at_k(ranked, qrels[qid], k),
                recall=recall_at_k(ranked, qrels[qid], k),
            )
        )
    if not per_query:
        raise EvalError("no queries evaluated")

    mean_ndcg = sum(r.ndcg for r in per_query) / len(per_query)
    mean_recall = sum(r.recall for r in per_query) / len(per_query)
    snapshot = {
        "algo": config.algo,
        "kernel": config.kernel if config.algo == "bm25" else None,
        "alpha": config.alpha,
        "beta": config.beta,
        "k1": config.k1,
        "b": config.b,
        "delta": config.delta,
        "normalize": config.normalize,
        "pipeline_hash": index.pipeline_config_hash,
        "wqa": wqa is not None,
        "wqa_weight": wqa_weight if wqa is not None else None,
    }
    return EvalRun(
        dataset=dataset_name,
        algo=config.algo,
        k=k,
        per_query=per_query,
        ndcg=mean_ndcg,
        recall=mean_recall,
        config_snapshot=snapshot,
        index_seconds=0.0,
        search_seconds=search_seconds,
        query_mean_ms=1000.0 * search_seconds / len(per_query),
        failures=failures,
        skipped_no_positive=skipped,
    )


def run_eval(
    dataset: BeirDataset,
    config: ScorerConfig,
    k: int = 10,
    wqa: Mapping[str, Sequence[str]] | None = None,
    wqa_weight: float = 0.5,
    workers: int = 0,
    pipeline: PipelineConfig | None = None,
) -> EvalRun:
    """Build an index from the dataset corpus and evaluate every judged query."""
    pipeline = pipeline or config.pipeline or PipelineConfig()
    index_start = time.perf_counter()
    index = build_index(iter(dataset.corpus), pipeline)
    index_seconds = time.perf_counter() - index_start
    run = evaluate_index(
        index,
        dataset.queries,
        dataset.qrels,
        config,
        k=k,
        wqa=wqa,
        wqa_weight=wqa_weight,
        workers=workers,
        dataset_name=dataset.name,
    )
    run.index_seconds = index_seconds
    return run


def run_eval_from_dir(
    dataset_dir: str, config: ScorerConfig, k: int = 10, **kwargs
) -> EvalRun:
    return run_eval(load_beir_dataset(dataset_dir), config, k=k, **kwargs)


# -- reporting ---------------------------------------------------------------


def timing_report(runs: Sequence[EvalRun] | EvalRun) -> tuple[str, str]:
    """(csv_text, human_text) timing summary for one or more runs."""
    if isinstance(runs, EvalRun):
        runs = [runs]
    if not runs or not any(run.per_query for run in runs):
        raise EvalError("no queries evaluated")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "algo", "index_s", "search_ms_mean"])
    lines = [f"{'dataset':<16} {'algo':<6} {'index_s':>9} {'search_ms_mean':>15}"]
    for run in runs:
        writer.writerow(
            [run.dataset, run.algo, f"{run.index_seconds:.3f}", f"{run.query_mean_ms:.3f}"]
        )
        lines.append(
            f"{run.dataset:<16} {run.algo:<6} {run.index_seconds:>9.3f} "
            f"{run.query_mean_ms:>15.3f}"
        )
    return buf.getvalue(), "\n".join(lines)


def run_to_dict(run: EvalRun) -> dict:
    """JSON-ready view of a run; metric fields only, timing kept separate
    so primary outputs stay byte-stable across repeat runs."""
    return {
        "dataset": run.dataset,
        "algo": run.algo,
        "k": run.k,
        f"ndcg@{run.k}": run.ndcg,
        f"recall@{run.k}": run.recall,
        "queries_evaluated": len(run.per_query),
        "queries_failed": len(run.failures),
        "queries_without_positive_qrels": run.skipped_no_positive,
        "config": run.config_snapshot,
        "per_query": {
            r.query_id: {"ndcg": r.ndcg, "recall": r.recall} for r in run.per_query
        },
    }
