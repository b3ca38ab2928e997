"""Command-line entry point: index, search, eval, sweep, augment.

Configuration is layered: CLI flags override the JSON config file, which
overrides built-in defaults. Exit codes: 0 success, 1 user/config error,
2 data error, 3 partial failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

from . import augmentation as aug_mod
from .config import ConfigError, EngineConfig, load_engine_config
from .evaluation import (
    DatasetError,
    EvalError,
    evaluate_index,
    load_beir_dataset,
    run_to_dict,
    timing_report,
)
from .index import (
    InvertedIndexError,
    build_index,
    load_index,
    read_corpus_jsonl,
    save_index,
)
from .retrieval import AugmentedQuerySet, SearchError, search_topk, search_wqa
from .scoring import ScoringError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

logger = logging.getLogger(__name__)


def _add_scorer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--algo", choices=["bmx", "bm25"], default=None)
    parser.add_argument(
        "--kernel",
        choices=["robertson", "atire", "bm25plus", "bm25l", "lucene"],
        default=None,
    )
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--k1", type=float, default=None)
    parser.add_argument("--b", type=float, default=None)
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--normalize", action="store_true", default=None)


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-lowercase", action="store_true", default=None)
    parser.add_argument("--no-stopwords", action="store_true", default=None)
    parser.add_argument("--stopwords", metavar="FILE", default=None,
                        help="plain-text stopword file, one word per line")
    parser.add_argument("--stemmer", choices=["none", "porter-english"], default=None)
    parser.add_argument(
        "--splitter", choices=["unicode-words", "whitespace"], default=None
    )


def _overrides_from_args(args: argparse.Namespace) -> dict:
    pipeline: dict = {}
    if getattr(args, "no_lowercase", None):
        pipeline["lowercase"] = False
    if getattr(args, "no_stopwords", None):
        pipeline["stopwords"] = []
    if getattr(args, "stopwords", None):
        pipeline["stopwords_file"] = args.stopwords
    if getattr(args, "stemmer", None) is not None:
        pipeline["stemmer"] = args.stemmer
    if getattr(args, "splitter", None) is not None:
        pipeline["token_splitter"] = args.splitter

    scorer: dict = {}
    for key in ("algo", "kernel", "alpha", "beta", "k1", "b", "delta"):
        value = getattr(args, key, None)
        if value is not None:
            scorer[key] = value
    if getattr(args, "normalize", None):
        scorer["normalize"] = True

    wqa: dict = {}
    if getattr(args, "wqa", None):
        wqa["enabled"] = True
        wqa["augmentations_path"] = args.wqa
    if getattr(args, "wqa_weight", None) is not None:
        wqa["default_weight"] = args.wqa_weight

    overrides: dict = {}
    if pipeline:
        overrides["pipeline"] = pipeline
    if scorer:
        overrides["scorer"] = scorer
    if wqa:
        overrides["wqa"] = wqa
    return overrides


def _engine_config(args: argparse.Namespace) -> EngineConfig:
    return load_engine_config(
        path=getattr(args, "config", None), overrides=_overrides_from_args(args)
    )


def cmd_index(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    if not os.path.exists(args.corpus):
        print(f"error: corpus file not found: {args.corpus}", file=sys.stderr)
        return EXIT_DATA
    if os.path.exists(args.out) and not args.force:
        print(
            f"error: {args.out} exists; pass --force to overwrite", file=sys.stderr
        )
        return EXIT_USAGE
    start = time.perf_counter()
    index = build_index(
        read_corpus_jsonl(args.corpus), config.pipeline, workers=args.threads
    )
    build_seconds = time.perf_counter() - start
    save_index(index, args.out, overwrite=args.force)
    print(
        f"n={index.doc_count} avgdl={index.avg_doc_length:g} "
        f"vocab={index.vocabulary_size} build_s={build_seconds:.3f}"
    )
    return EXIT_OK


def _load_wqa_map(args, config: EngineConfig):
    path = getattr(args, "wqa", None) or config.wqa.augmentations_path
    if not path and not config.wqa.enabled:
        return None, config.wqa.default_weight
    if not path:
        raise ConfigError("wqa enabled but no augmentations path configured")
    records = aug_mod.load_augmentations(path)
    weight = args.wqa_weight if getattr(args, "wqa_weight", None) is not None else (
        config.wqa.default_weight
    )
    return dict(records), weight


def cmd_search(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    index = load_index(args.index)
    # without explicit pipeline options the index's stored config rules;
    # with them, the fingerprint check below rejects a mismatch
    scorer = config.scorer
    if not config.pipeline_overridden:
        scorer = replace(scorer, pipeline=None)
    wqa_map, wqa_weight = _load_wqa_map(args, config)

    if args.query is not None:
        queries = [("q0", args.query)]
    else:
        queries = []
        with open(args.queries, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if line:
                    queries.append((f"q{i}", line))

    rows = []
    for qid, text in queries:
        if wqa_map is not None and text in wqa_map:
            hits = search_wqa(
                AugmentedQuerySet(
                    original=text,
                    augmented=wqa_map[text].weighted(wqa_weight),
                ),
                args.k,
                index,
                scorer,
            )
        else:
            hits = search_topk(text, args.k, index, scorer)
        for rank, hit in enumerate(hits, start=1):
            rows.append((qid, text, rank, hit.external_id, hit.score))

    if args.format == "json":
        out = {}
        for qid, text, rank, ext, score in rows:
            out.setdefault(qid, {"query": text, "hits": []})["hits"].append(
                {"rank": rank, "id": ext, "score": score}
            )
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        writer = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
        for qid, _text, rank, ext, score in rows:
            writer.writerow([qid, rank, ext, f"{score:.6f}"])
    return EXIT_OK


def _eval_run(args, config: EngineConfig, scorer_overrides: dict | None = None):
    dataset = load_beir_dataset(args.dataset, qrels_file=getattr(args, "qrels", None))
    wqa_map, wqa_weight = _load_wqa_map(args, config)
    scorer = config.scorer
    if scorer_overrides:
        scorer = replace(scorer, **scorer_overrides)
    workers = 1 if args.single_thread else args.threads
    from .evaluation import run_eval

    return run_eval(
        dataset,
        scorer,
        k=args.k,
        wqa=wqa_map,
        wqa_weight=wqa_weight,
        workers=workers,
        pipeline=config.pipeline,
    )


def cmd_eval(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    run = _eval_run(args, config)
    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(run_to_dict(run), fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_text, human = timing_report(run)
    with open(os.path.join(args.out, "timing.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    print(human)
    print(f"ndcg@{run.k}={run.ndcg:.4f} recall@{run.k}={run.recall:.4f}")
    if run.failures:
        for qid, message in run.failures:
            print(f"query {qid} failed: {message}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError("empty parameter grid")
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    alphas = _parse_grid(args.alpha_grid)
    betas = _parse_grid(args.beta_grid)
    dataset = load_beir_dataset(args.dataset, qrels_file=getattr(args, "qrels", None))
    workers = 1 if args.single_thread else args.threads

    index = build_index(iter(dataset.corpus), config.pipeline)
    rows = []
    for beta in betas:
        row = [f"{beta:g}"]
        for alpha in alphas:
            scorer = replace(config.scorer, algo="bmx", alpha=alpha, beta=beta)
            run = evaluate_index(
                index,
                dataset.queries,
                dataset.qrels,
                scorer,
                k=args.k,
                workers=workers,
                dataset_name=dataset.name,
            )
            row.append(f"{100.0 * run.ndcg:.2f}")
        rows.append(row)

    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["beta\\alpha"] + [f"{a:g}" for a in alphas])
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    with open(args.queries, "r", encoding="utf-8") as fh:
        queries = [line.strip() for line in fh if line.strip()]
    if args.stub:
        transport = aug_mod.stub_transport()
    else:
        transport = None
        if not args.endpoint:
            print(
                "error: no endpoint configured; pass --endpoint URL (with the "
                f"credential in ${aug_mod.DEFAULT_CREDENTIAL_ENV}) or --stub",
                file=sys.stderr,
            )
            return EXIT_USAGE
    endpoint = aug_mod.EndpointConfig(
        base_url=args.endpoint,
        model=args.model,
        temperature=args.temperature,
        concurrency=args.concurrency,
        retries=args.retries,
        transport=transport,
    )
    results = aug_mod.generate_augmentations(queries, args.size, endpoint)
    records = [r.record for r in results if r.record is not None]
    errors = [(r.query, r.error) for r in results if r.error is not None]
    aug_mod.save_augmentations(records, args.out)
    print(f"wrote {len(records)} records to {args.out}; {len(errors)} errors")
    for query, message in errors:
        print(f"query {query!r}: {message}", file=sys.stderr)
    if errors and not records:
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmx",
        description="Lexical search with BMX and BM25 ranking.",
    )
    parser.add_argument("--config", metavar="FILE", default=None,
                        help="JSON config file (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build and persist an index")
    p_index.add_argument("--corpus", required=True, help="BEIR corpus.jsonl")
    p_index.add_argument("--out", required=True, help="output index file")
    p_index.add_argument("--force", action="store_true")
    p_index.add_argument("--threads", type=int, default=1)
    _add_pipeline_flags(p_index)
    p_index.set_defaults(func=cmd_index)

    p_search = sub.add_parser("search", help="query a persisted index")
    p_search.add_argument("--index", required=True)
    group = p_search.add_mutually_exclusive_group(required=True)
    group.add_argument("--query", help="single query string")
    group.add_argument("--queries", help="text file, one query per line")
    p_search.add_argument("--k", type=int, default=10)
    p_search.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p_search.add_argument("--wqa", metavar="JSONL", default=None,
                          help="augmentations file for weighted query augmentation")
    p_search.add_argument("--wqa-weight", type=float, default=None)
    _add_scorer_flags(p_search)
    p_search.set_defaults(func=cmd_search)

    p_eval = sub.add_parser("eval", help="evaluate on a BEIR-format directory")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--qrels", default=None, help="qrels TSV (default qrels/test.tsv)")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--k", type=int, default=10)
    p_eval.add_argument("--threads", type=int, default=0)
    p_eval.add_argument("--single-thread", action="store_true")
    p_eval.add_argument("--wqa", metavar="JSONL", default=None)
    p_eval.add_argument("--wqa-weight", type=float, default=None)
    _add_scorer_flags(p_eval)
    _add_pipeline_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="alpha/beta grid of bmx NDCG@k")
    p_sweep.add_argument("--dataset", required=True)
    p_sweep.add_argument("--qrels", default=None)
    p_sweep.add_argument("--alpha-grid", required=True, help="comma-separated values")
    p_sweep.add_argument("--beta-grid", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", default="-", help="CSV path or - for stdout")
    p_sweep.add_argument("--k", type=int, default=10)
    p_sweep.add_argument("--threads", type=int, default=0)
    p_sweep.add_argument("--single-thread", action="store_true")
    _add_pipeline_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_aug = sub.add_parser("augment", help="generate augmented queries")
    p_aug.add_argument("--queries", required=True, help="text file, one query per line")
    p_aug.add_argument("--out", required=True, help="output JSONL")
    p_aug.add_argument("--size", type=int, default=10)
    p_aug.add_argument("--endpoint", default=None, help="chat-completion base URL")
    p_aug.add_argument("--model", default="gpt-4")
    p_aug.add_argument("--temperature", type=float, default=0.0)
    p_aug.add_argument("--concurrency", type=int, default=4)
    p_aug.add_argument("--retries", type=int, default=3)
    p_aug.add_argument("--stub", action="store_true",
                       help="use the deterministic offline stub transport")
    p_aug.set_defaults(func=cmd_augment)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SearchError, ScoringError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, EvalError, InvertedIndexError, aug_mod.AugmentationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
