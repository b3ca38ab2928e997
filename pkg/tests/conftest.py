"""Shared fixtures: plain pipeline config, toy corpora, dataset paths.

The SciFact/NFCorpus reproduction tests look for BEIR-layout directories
under $BMX_BEIR_DATA (default: <repo>/data). Fetch them with
scripts/fetch_beir.py if missing; the tests skip when the data is absent.
"""

from __future__ import annotations

import os
import random

import pytest

from bmx_search.index import build_index
from bmx_search.pipeline import PipelineConfig

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.environ.get("BMX_BEIR_DATA", os.path.join(REPO_ROOT, "data"))
FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")

# one line per acceptance criterion, printed after the run (see
# tests/test_acceptance.py)
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def plain_config() -> PipelineConfig:
    """Pipeline that keeps tokens as-is: whitespace split, no filters."""
    return PipelineConfig(
        lowercase=True,
        strip_punctuation=False,
        stopwords=frozenset(),
        stemmer="none",
        token_splitter="whitespace",
    )


@pytest.fixture()
def tiny_index(plain_config):
    """The two-document corpus used by many contract examples."""
    return build_index([("a", "x y"), ("b", "y")], plain_config)


def random_corpus(
    rng: random.Random,
    max_docs: int = 50,
    max_doc_len: int = 200,
    vocab_size: int = 20,
) -> list[str]:
    """Space-separated token documents over a small vocabulary.

    Includes occasional empty documents; token draws are zipf-ish so some
    terms are common and some rare.
    """
    vocab = [f"t{i}" for i in range(rng.randint(1, vocab_size))]
    weights = [1.0 / (i + 1) for i in range(len(vocab))]
    n_docs = rng.randint(1, max_docs)
    docs = []
    for _ in range(n_docs):
        if rng.random() < 0.05:
            docs.append("")
            continue
        length = rng.randint(1, max_doc_len)
        docs.append(" ".join(rng.choices(vocab, weights=weights, k=length)))
    return docs


def random_query(rng: random.Random, docs: list[str], max_len: int = 8) -> str:
    """Query tokens drawn from the corpus vocabulary plus occasional
    unindexed tokens; duplicates allowed."""
    vocab = sorted({t for d in docs for t in d.split()})
    pool = vocab + ["zz", "qq"]
    if not pool:
        pool = ["zz"]
    length = rng.randint(1, max_len)
    return " ".join(rng.choices(pool, k=length))


def dataset_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


def require_dataset(name: str) -> str:
    path = dataset_path(name)
    if not os.path.exists(os.path.join(path, "corpus.jsonl")):
        pytest.skip(
            f"{name} dataset not found under {DATA_DIR}; "
            "run scripts/fetch_beir.py first"
        )
    return path
