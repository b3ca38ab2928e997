"""Text pipeline: deterministic transformation of raw text into tokens.

Indexing and querying share one code path (``tokenize`` with one
``PipelineConfig``), so a query token can only ever match a document token
produced by the identical transformation.

Stages, in order: lowercase, split, punctuation strip (whitespace splitter
only), stopword removal, stemming. Every stage is a pure function of the
config, so the pipeline is safe to call concurrently.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable

import snowballstemmer

from .stopwords import ENGLISH_STOPWORDS

STEMMERS = ("none", "porter-english")
SPLITTERS = ("unicode-words", "whitespace")

# Word = maximal run of letters/digits (unicode-aware). Underscore is
# excluded so "foo_bar" splits like "foo-bar" does. Keeps years and mixed
# alphanumerics ("2021", "bm25") as single tokens.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class PipelineConfig:
    """Immutable tokenization settings shared by index build and search."""

    lowercase: bool = True
    strip_punctuation: bool = True
    stopwords: frozenset[str] = field(default=ENGLISH_STOPWORDS)
    stemmer: str = "porter-english"
    token_splitter: str = "unicode-words"

    def __post_init__(self) -> None:
        if self.stemmer not in STEMMERS:
            raise ValueError(
                f"unknown stemmer {self.stemmer!r}; expected one of {STEMMERS}"
            )
        if self.token_splitter not in SPLITTERS:
            raise ValueError(
                f"unknown token_splitter {self.token_splitter!r}; "
                f"expected one of {SPLITTERS}"
            )
        if not isinstance(self.stopwords, frozenset):
            object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "stopwords": sorted(self.stopwords),
            "stemmer": self.stemmer,
            "token_splitter": self.token_splitter,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        kwargs = dict(data)
        if "stopwords" in kwargs:
            kwargs["stopwords"] = frozenset(kwargs["stopwords"])
        return cls(**kwargs)

    def fingerprint(self) -> str:
        """Hex digest identifying this config; stored in indexes so a search
        can verify it tokenizes queries the same way the corpus was indexed."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_stopword_file(path: str) -> frozenset[str]:
    """Read a plain-text stopword file, one word per line; blank lines and
    ``#`` comment lines are skipped."""
    words = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word and not word.startswith("#"):
                words.append(word)
    return frozenset(words)


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punctuation(token[start]):
        start += 1
    while end > start and _is_punctuation(token[end - 1]):
        end -= 1
    return token[start:end]


class _Stemmer:
    """Memoizing wrapper around the snowball English (Porter2) stemmer.

    Stemming dominates tokenization cost on large corpora; vocabulary is
    tiny compared to token count, so a cache collapses it. The cache is
    value-deterministic (pure function), so concurrent use is safe.
    """

    def __init__(self) -> None:
        self._impl = snowballstemmer.stemmer("english")
        self._cache: dict[str, str] = {}

    def __call__(self, token: str) -> str:
        stem = self._cache.get(token)
        if stem is None:
            stem = self._impl.stemWord(token)
            self._cache[token] = stem
        return stem


_PORTER_ENGLISH = _Stemmer()


def tokenize(text: str, config: PipelineConfig) -> list[str]:
    """Turn raw text into the final token sequence under ``config``.

    Output order follows surface order; the result's length is the token
    count the scorers use as document/query length.
    """
    if config.lowercase:
        text = text.lower()

    if config.token_splitter == "unicode-words":
        tokens = _WORD_RE.findall(text)
    else:
        tokens = text.split()
        if config.strip_punctuation:
            tokens = [_strip_punctuation(t) for t in tokens]
        tokens = [t for t in tokens if t]

    if config.stopwords:
        stop = config.stopwords
        tokens = [t for t in tokens if t not in stop]

    if config.stemmer == "porter-english":
        stem = _PORTER_ENGLISH
        tokens = [stem(t) for t in tokens]
        tokens = [t for t in tokens if t]

    return tokens


def tokenize_batch(
    texts: Iterable[str], config: PipelineConfig, workers: int = 1
) -> list[list[str]]:
    """Tokenize many texts, optionally with a thread pool.

    Output order always matches input order, so results are independent of
    worker count.
    """
    texts = list(texts)
    if workers <= 1 or len(texts) < 2:
        return [tokenize(t, config) for t in texts]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: tokenize(t, config), texts))
