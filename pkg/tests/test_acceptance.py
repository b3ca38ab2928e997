"""Acceptance suite: every release criterion at its pinned tolerance.

Each criterion is one test; a summary line per criterion is printed after
the run. The SciFact/NFCorpus reproductions need the datasets under
$BMX_BEIR_DATA (default <repo>/data; see scripts/fetch_beir.py) and skip
when the data is absent.

Full-benchmark averages, WQA benchmark tables, and multi-GB corpora are
out of scope here: the harness itself is exercised end-to-end on a
fixture-scale dataset with a stubbed augmentation transport instead
(criterion 10).
"""

from __future__ import annotations

import contextlib
import json
import math
import os
import random
import time

import numpy as np
import pytest

from bmx_search.cli import main as cli_main
from bmx_search.config import ScorerConfig
from bmx_search.evaluation import (
    evaluate_index,
    load_beir_dataset,
    ndcg_at_k,
    recall_at_k,
)
from bmx_search.index import build_index
from bmx_search.pipeline import PipelineConfig
from bmx_search.retrieval import AugmentedQuerySet, search_topk, search_wqa
from bmx_search.scoring import (
    BmxParams,
    build_query_plan,
    max_score_estimate,
    score_candidates,
    token_raw_entropy,
)

import oracle
from conftest import (
    ACCEPTANCE_LINES,
    FIXTURES,
    random_corpus,
    random_query,
    require_dataset,
)

PLAIN = PipelineConfig(
    lowercase=True,
    strip_punctuation=False,
    stopwords=frozenset(),
    stemmer="none",
    token_splitter="whitespace",
)

KERNELS = ("robertson", "atire", "bm25plus", "bm25l", "lucene")


@contextlib.contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        ACCEPTANCE_LINES.append(f"criterion {number:2d}: FAIL - {description}")
        raise
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: PASS - {description}")


def _build(docs: list[str]):
    return build_index([(f"d{i}", t) for i, t in enumerate(docs)], PLAIN)


# -- criterion 1: oracle equivalence sweep -------------------------------------


def test_criterion_1_oracle_equivalence():
    with criterion(1, "engine matches brute-force oracle on 200 random corpora"):
        start = time.perf_counter()
        rng = random.Random(20240817)
        checked_scores = 0
        for corpus_no in range(200):
            docs = random_corpus(rng, max_docs=50, max_doc_len=200, vocab_size=20)
            idx = _build(docs)
            corpus = oracle.OracleCorpus(docs)
            query = random_query(rng, docs)
            candidates = corpus.candidates(query)
            alpha = rng.choice([0.05, 0.3, 0.7, 1.0, 1.5])
            beta = rng.choice([0.0, 0.1, 0.5, 1.0])
            k1 = rng.choice([0.0, 0.9, 1.2, 2.0])
            b = rng.choice([0.0, 0.4, 0.75, 1.0])
            exact = corpus_no < 10  # arbitrary-precision pass on a subset

            configs = [
                ("bmx", {"alpha": alpha, "beta": beta}, False),
                ("bmx", {"alpha": alpha, "beta": beta}, True),
            ]
            for kernel in KERNELS:
                params = {"kernel": kernel, "k1": k1, "b": b}
                configs.append(("bm25", params, False))
                configs.append(("bm25", params, True))

            for algo, params, normalize in configs:
                want = oracle.scores_for(
                    corpus, query, algo, params, normalize=normalize, exact=exact
                )
                config = ScorerConfig(
                    algo=algo,
                    alpha=params.get("alpha"),
                    beta=params.get("beta"),
                    k1=params.get("k1", 1.2),
                    b=params.get("b", 0.75),
                    kernel=params.get("kernel", "robertson"),
                    normalize=normalize,
                )
                hits = search_topk(query, max(len(docs), 1), idx, config)
                assert {h.internal_id for h in hits} == set(candidates)
                for earlier, later in zip(hits, hits[1:]):
                    # the documented engine sort: score desc, id asc on ties
                    assert earlier.score > later.score or (
                        earlier.score == later.score
                        and earlier.internal_id < later.internal_id
                    )
                for hit in hits:
                    assert abs(hit.score - float(want[hit.internal_id])) <= 1e-9, (
                        corpus_no, algo, params, normalize, hit,
                    )
                    checked_scores += 1
                # top-k lists must walk the oracle's ranking; docs whose
                # oracle scores tie within 1e-9 may permute inside the tie
                # (exact mathematical ties land one ulp apart in float)
                for k in (1, 5, 10, len(docs)):
                    got = [h.internal_id for h in search_topk(query, k, idx, config)]
                    oracle.assert_ranking_consistent(got, want, candidates)
        elapsed = time.perf_counter() - start
        assert checked_scores > 10_000
        assert elapsed < 120.0, f"criterion 1 took {elapsed:.1f}s (budget 120s)"


# -- criteria 2-5: dataset reproductions -----------------------------------------


@pytest.fixture(scope="session")
def scifact():
    path = require_dataset("scifact")
    ds = load_beir_dataset(path)
    start = time.perf_counter()
    index = build_index(iter(ds.corpus), PipelineConfig())
    return ds, index, time.perf_counter() - start


@pytest.fixture(scope="session")
def nfcorpus():
    path = require_dataset("nfcorpus")
    ds = load_beir_dataset(path)
    index = build_index(iter(ds.corpus), PipelineConfig())
    return ds, index


def _ndcg(ds, index, config) -> float:
    run = evaluate_index(index, ds.queries, ds.qrels, config, k=10)
    return 100.0 * run.ndcg


@pytest.fixture(scope="session")
def scifact_grid(scifact):
    """NDCG@10 for the alpha grid at beta=0.1 plus the extra spot cells."""
    ds, index, _ = scifact
    cells: dict[tuple[float, float], float] = {}
    for alpha in [round(0.1 * i, 1) for i in range(1, 11)]:
        cells[(alpha, 0.1)] = _ndcg(
            ds, index, ScorerConfig(algo="bmx", alpha=alpha, beta=0.1)
        )
    cells[(0.1, 1.0)] = _ndcg(ds, index, ScorerConfig(algo="bmx", alpha=0.1, beta=1.0))
    return cells


def test_criterion_2_scifact_reproduction(scifact):
    with criterion(2, "SciFact: BM25 68.67+-2.0, BMX 69.42+-2.0, BMX > BM25"):
        start = time.perf_counter()
        ds, index, index_seconds = scifact
        bm25 = _ndcg(
            ds, index, ScorerConfig(algo="bm25", kernel="robertson", k1=1.2, b=0.75)
        )
        bmx = _ndcg(ds, index, ScorerConfig(algo="bmx"))
        assert bm25 == pytest.approx(68.67, abs=2.0), f"BM25 NDCG@10 {bm25:.2f}"
        assert bmx == pytest.approx(69.42, abs=2.0), f"BMX NDCG@10 {bmx:.2f}"
        assert bmx > bm25, f"BMX {bmx:.2f} must beat BM25 {bm25:.2f} on SciFact"
        elapsed = time.perf_counter() - start + index_seconds
        assert elapsed < 300.0, f"criterion 2 took {elapsed:.1f}s (budget 300s)"


def test_criterion_3_nfcorpus_reproduction(nfcorpus):
    with criterion(3, "NFCorpus: BM25 32.68+-2.0, BMX 32.84+-2.0"):
        start = time.perf_counter()
        ds, index = nfcorpus
        bm25 = _ndcg(
            ds, index, ScorerConfig(algo="bm25", kernel="robertson", k1=1.2, b=0.75)
        )
        bmx = _ndcg(ds, index, ScorerConfig(algo="bmx"))
        assert bm25 == pytest.approx(32.68, abs=2.0), f"BM25 NDCG@10 {bm25:.2f}"
        assert bmx == pytest.approx(32.84, abs=2.0), f"BMX NDCG@10 {bmx:.2f}"
        elapsed = time.perf_counter() - start
        assert elapsed < 300.0, f"criterion 3 took {elapsed:.1f}s (budget 300s)"


def test_criterion_4_ablation_spot_checks(scifact_grid):
    with criterion(4, "SciFact ablation cells within 2.0; alpha trend holds"):
        cells = scifact_grid
        assert cells[(1.0, 0.1)] == pytest.approx(68.91, abs=2.0), cells[(1.0, 0.1)]
        assert cells[(0.1, 0.1)] == pytest.approx(65.92, abs=2.0), cells[(0.1, 0.1)]
        assert cells[(0.1, 1.0)] == pytest.approx(65.22, abs=2.0), cells[(0.1, 1.0)]
        row = [cells[(round(0.1 * i, 1), 0.1)] for i in range(1, 11)]
        assert all(b >= a - 0.5 for a, b in zip(row, row[1:])), row


def test_criterion_5_dynamic_defaults_beat_grid(scifact, scifact_grid):
    with criterion(5, "SciFact: dynamic-default BMX >= every grid cell - 0.5"):
        ds, index, _ = scifact
        defaults = _ndcg(ds, index, ScorerConfig(algo="bmx"))
        worst_gap = defaults - max(scifact_grid.values())
        assert all(defaults >= cell - 0.5 for cell in scifact_grid.values()), (
            defaults, scifact_grid,
        )


# -- criterion 6: WQA identities ---------------------------------------------------


def test_criterion_6_wqa_identities():
    with criterion(6, "WQA: zero weights / t=0 bitwise-equal; w=1 duplicate doubles"):
        rng = random.Random(6)
        configs = [
            ScorerConfig(algo="bmx", alpha=0.8, beta=0.3),
            ScorerConfig(algo="bm25", kernel="robertson"),
            ScorerConfig(algo="bm25", kernel="bm25l"),
        ]
        for _ in range(25):
            docs = random_corpus(rng, max_docs=40, max_doc_len=60)
            idx = _build(docs)
            query = random_query(rng, docs)
            for config in configs:
                base = search_topk(query, max(len(docs), 1), idx, config)

                zeroed = search_wqa(
                    AugmentedQuerySet(
                        original=query,
                        augmented=((random_query(rng, docs), 0.0),),
                    ),
                    max(len(docs), 1),
                    idx,
                    config,
                )
                assert zeroed[: len(base)] == base  # scores bitwise equal
                assert all(h.score == 0.0 for h in zeroed[len(base):])

                empty = search_wqa(
                    AugmentedQuerySet(original=query, augmented=()),
                    max(len(docs), 1),
                    idx,
                    config,
                )
                assert empty == base

                doubled = search_wqa(
                    AugmentedQuerySet(original=query, augmented=((query, 1.0),)),
                    max(len(docs), 1),
                    idx,
                    config,
                )
                assert [h.internal_id for h in doubled] == [
                    h.internal_id for h in base
                ]
                for two, one in zip(doubled, base):
                    assert two.score == 2.0 * one.score


# -- criterion 7: normalization properties -------------------------------------------


def test_criterion_7_normalization_properties():
    with criterion(7, "normalization: ranking invariant; estimate gap == m; zeros stay 0"):
        rng = random.Random(7)
        for _ in range(25):
            docs = random_corpus(rng, max_docs=40, max_doc_len=60)
            idx = _build(docs)
            query = random_query(rng, docs)
            tokens = query.split()
            plan = build_query_plan(tokens, idx)
            all_docs = np.arange(idx.doc_count, dtype=np.uint32)
            scores = score_candidates(
                plan, all_docs, idx, BmxParams(alpha=0.7, beta=0.4)
            )
            estimate = max_score_estimate(plan.m, idx.doc_count, "bmx")
            normalized = scores / estimate
            assert np.array_equal(np.argsort(-scores), np.argsort(-normalized))
            # documents sharing no token with the query keep score exactly 0
            overlap = np.zeros(idx.doc_count, dtype=bool)
            for term in set(tokens):
                ids, _ = idx.postings_arrays(term)
                overlap[ids] = True
            assert np.all(normalized[~overlap] == 0.0)

        for _ in range(500):
            m = rng.randint(1, 300)
            n = rng.randint(1, 10**7)
            assert (
                max_score_estimate(m, n, "bmx") - max_score_estimate(m, n, "bm25")
                == m
            )


# -- criterion 8: entropy suite ---------------------------------------------------------


def test_criterion_8_entropy_suite():
    with criterion(8, "entropy: max-normalized == 1.0; tf=100 < 1e-40; absent guard"):
        rng = random.Random(8)
        seen_positive = 0
        for _ in range(50):
            docs = random_corpus(rng, max_docs=30, max_doc_len=50)
            idx = _build(docs)
            query = random_query(rng, docs)
            plan = build_query_plan(query.split(), idx)
            raws = [s.raw_entropy for s in plan.stats.values()]
            if any(r > 0 for r in raws):
                seen_positive += 1
                assert max(s.norm_entropy for s in plan.stats.values()) == 1.0
        assert seen_positive > 30  # the sweep actually exercised the property

        assert token_raw_entropy([100]) < 1e-40

        idx = _build(["alpha beta", "beta gamma"])
        plan = build_query_plan(["zz", "qq"], idx)
        assert plan.avg_entropy == 0.0
        assert all(s.norm_entropy == 0.0 for s in plan.stats.values())


# -- criterion 9: metric oracle ------------------------------------------------------------


def test_criterion_9_ndcg_oracle():
    with criterion(9, "NDCG matches reference on 100 random instances; rank-2 value"):
        rng = random.Random(9)
        for _ in range(100):
            universe = [f"d{i}" for i in range(rng.randint(2, 50))]
            judged = rng.sample(universe, rng.randint(1, len(universe)))
            qrels = {d: rng.randint(0, 3) for d in judged}
            if not any(g > 0 for g in qrels.values()):
                qrels[judged[0]] = rng.randint(1, 3)
            ranked = rng.sample(universe, rng.randint(1, len(universe)))
            k = rng.randint(1, 20)
            assert ndcg_at_k(ranked, qrels, k) == pytest.approx(
                oracle.reference_ndcg(ranked, qrels, k), abs=1e-9
            )
            assert recall_at_k(ranked, qrels, k) == pytest.approx(
                oracle.reference_recall(ranked, qrels, k), abs=1e-9
            )
        assert ndcg_at_k(["miss", "hit"], {"hit": 1}, 10) == pytest.approx(
            0.63093, abs=1e-5
        )


# -- criterion 10: end-to-end harness on user-supplied inputs ---------------------------------


def test_criterion_10_end_to_end_fixture(tmp_path):
    with criterion(10, "harness runs end-to-end on a BEIR dir + stub augmentations"):
        tiny = os.path.join(FIXTURES, "beir_tiny")

        index_path = str(tmp_path / "tiny.bmx")
        assert cli_main(
            ["index", "--corpus", os.path.join(tiny, "corpus.jsonl"),
             "--out", index_path]
        ) == 0

        queries_txt = tmp_path / "queries.txt"
        ds = load_beir_dataset(tiny)
        queries_txt.write_text(
            "".join(text + "\n" for text in ds.queries.values()), encoding="utf-8"
        )
        aug_path = str(tmp_path / "aug.jsonl")
        assert cli_main(
            ["augment", "--queries", str(queries_txt), "--out", aug_path,
             "--size", "3", "--stub"]
        ) == 0
        records = [json.loads(line) for line in open(aug_path, encoding="utf-8")]
        assert len(records) == len(ds.queries)
        assert all(len(r["augmented_queries"]) == 3 for r in records)

        plain_out = str(tmp_path / "plain")
        assert cli_main(
            ["eval", "--dataset", tiny, "--out", plain_out, "--algo", "bmx"]
        ) == 0
        wqa_out = str(tmp_path / "wqa")
        assert cli_main(
            ["eval", "--dataset", tiny, "--out", wqa_out, "--algo", "bmx",
             "--wqa", aug_path, "--wqa-weight", "0.5"]
        ) == 0
        for out in (plain_out, wqa_out):
            metrics = json.loads(
                open(os.path.join(out, "metrics.json"), encoding="utf-8").read()
            )
            assert 0.0 <= metrics["ndcg@10"] <= 1.0
            assert os.path.exists(os.path.join(out, "timing.csv"))

        sweep_out = str(tmp_path / "grid.csv")
        assert cli_main(
            ["sweep", "--dataset", tiny, "--alpha-grid", "0.5,1.0",
             "--beta-grid", "0.1", "--out", sweep_out]
        ) == 0
        assert len(open(sweep_out, encoding="utf-8").read().splitlines()) == 2
