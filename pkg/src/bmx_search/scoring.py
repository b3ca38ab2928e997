"""Ranking functions: BMX core, five BM25 kernels, and score normalization.

BMX extends BM25 with an entropy-weighted query-document similarity term.
For a query of m tokens q_1..q_m and a document D:

    bmx(D, Q) = sum_i [ IDF(q_i) * F(q_i,D) * (alpha+1)
                        / (F(q_i,D) + alpha*|D|/avgdl + alpha*AE)
                        + beta * E(q_i) * S(Q, D) ]

where F is term frequency, |D| the document token count, avgdl the corpus
mean document length, E(q_i) the normalized token entropy, AE the mean of
E over the query's tokens, and S the fraction of query tokens present in
the document. All logarithms are natural.

The five BM25 kernels (robertson, atire, bm25plus, bm25l, lucene) follow
the formulas documented in docs/bm25-kernels.md. All kernels produce
non-negative scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .index import InvertedIndex

BM25_KERNELS = ("robertson", "atire", "bm25plus", "bm25l", "lucene")

# Per-kernel default for the lower-bound shift; robertson/atire/lucene
# take no delta.
KERNEL_DELTA_DEFAULTS = {"bm25plus": 1.0, "bm25l": 0.5}


class ScoringError(ValueError):
    """Contract violation in a scoring call."""


@dataclass(frozen=True)
class BmxParams:
    """BMX hyperparameters; alpha controls TF saturation/length norm,
    beta weights the entropy-similarity bonus."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ScoringError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise ScoringError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75
    delta: float | None = None
    kernel: str = "robertson"

    def __post_init__(self) -> None:
        if self.kernel not in BM25_KERNELS:
            raise ScoringError(
                f"unknown kernel {self.kernel!r}; expected one of {BM25_KERNELS}"
            )
        if self.k1 < 0:
            raise ScoringError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ScoringError(f"b must be in [0, 1], got {self.b}")
        if self.delta is not None and self.delta < 0:
            raise ScoringError(f"delta must be >= 0, got {self.delta}")

    @property
    def effective_delta(self) -> float:
        if self.delta is not None:
            return self.delta
        return KERNEL_DELTA_DEFAULTS.get(self.kernel, 0.0)


def idf(l: int, n: int) -> float:
    """Inverse document frequency of a term contained in l of n documents.

    Uses the shifted form ln((n - l + 0.5) / (l + 0.5) + 1), which is
    strictly positive and strictly decreasing in l.
    """
    if n < 1:
        raise ScoringError(f"corpus size must be >= 1, got {n}")
    if l < 0 or l > n:
        raise ScoringError(f"doc frequency {l} outside [0, {n}]")
    return math.log((n - l + 0.5) / (l + 0.5) + 1.0)


def token_raw_entropy(tfs: Sequence[int] | np.ndarray) -> float:
    """Unnormalized token entropy over the documents containing the token.

    Each containing document contributes -p*ln(p) with p = sigmoid(tf).
    The sigmoid squashes large term frequencies toward 1, which caps the
    influence of highly repetitive documents. Empty postings give 0.
    """
    if len(tfs) == 0:
        return 0.0
    tf = np.asarray(tfs, dtype=np.float64)
    # -p*ln(p) == p*log1p(exp(-tf)): stable for large tf where p -> 1.
    neg_exp = np.exp(-tf)
    p = 1.0 / (1.0 + neg_exp)
    return float(np.sum(p * np.log1p(neg_exp)))


def default_alpha(avgdl: float) -> float:
    """Dynamic default alpha: avgdl/100 clamped to [0.5, 1.5]."""
    if not avgdl > 0:
        raise ScoringError(f"avgdl must be > 0, got {avgdl}")
    return max(min(1.5, avgdl / 100.0), 0.5)


def default_beta(n: int) -> float:
    """Dynamic default beta: 1 / ln(1 + n)."""
    if n < 1:
        raise ScoringError(f"corpus size must be >= 1, got {n}")
    return 1.0 / math.log(1.0 + n)


@dataclass(frozen=True)
class TokenStats:
    """Per-token statistics, shared by duplicate occurrences of the token."""

    idf: float
    doc_frequency: int
    raw_entropy: float
    norm_entropy: float


@dataclass
class QueryPlan:
    """Tokenized query with the per-token statistics scorers consume.

    ``tokens`` preserves duplicates (length m); values in ``stats`` are
    computed once per distinct token and reused for every occurrence.
    ``avg_entropy`` is the mean normalized entropy over all m occurrences.
    """

    tokens: list[str]
    unique_tokens: frozenset[str]
    stats: dict[str, TokenStats]
    avg_entropy: float
    index_ref: InvertedIndex = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.tokens)


def build_query_plan(query_tokens: Sequence[str], index: InvertedIndex) -> QueryPlan:
    """Compute IDF and entropy statistics for a tokenized query.

    Normalized entropy divides each raw entropy by the query max; when no
    query token occurs in the corpus the max is 0 and all normalized
    entropies are defined as 0.
    """
    if index.doc_count < 1:
        raise ScoringError("cannot build a query plan against an empty index")
    tokens = list(query_tokens)
    n = index.doc_count

    raw: dict[str, tuple[float, int, float]] = {}
    for term in dict.fromkeys(tokens):  # first-occurrence order, deduped
        _, tfs = index.postings_arrays(term)
        df = len(tfs)
        raw[term] = (idf(df, n), df, token_raw_entropy(tfs))

    max_raw = max((entry[2] for entry in raw.values()), default=0.0)
    stats = {
        term: TokenStats(
            idf=token_idf,
            doc_frequency=df,
            raw_entropy=raw_e,
            norm_entropy=(raw_e / max_raw) if max_raw > 0 else 0.0,
        )
        for term, (token_idf, df, raw_e) in raw.items()
    }
    m = len(tokens)
    avg_entropy = (
        sum(stats[t].norm_entropy for t in tokens) / m if m else 0.0
    )
    return QueryPlan(
        tokens=tokens,
        unique_tokens=frozenset(tokens),
        stats=stats,
        avg_entropy=avg_entropy,
        index_ref=index,
    )


def similarity(plan: QueryPlan, doc_tokens: frozenset[str] | set[str]) -> float:
    """S(Q, D): distinct query tokens present in the document, over m."""
    if plan.m < 1:
        raise ScoringError("similarity undefined for an empty query")
    return len(plan.unique_tokens & doc_tokens) / plan.m


def _check_plan(plan: QueryPlan, index: InvertedIndex) -> None:
    if plan.index_ref is not index:
        raise ScoringError("query plan was built against a different index")


def _matched_terms(plan: QueryPlan, doc_id: int, index: InvertedIndex):
    """(term, tf) for distinct query terms occurring in the document."""
    matched = []
    for term in plan.stats:
        tf = index.term_frequency(term, doc_id)
        if tf > 0:
            matched.append((term, tf))
    return matched


def bmx_score(
    doc_id: int, plan: QueryPlan, index: InvertedIndex, params: BmxParams
) -> float:
    """Score one document against the plan's query with BMX."""
    _check_plan(plan, index)
    if plan.m == 0:
        return 0.0
    matched = _matched_terms(plan, doc_id, index)
    counts = _occurrence_counts(plan)

    score = 0.0
    if matched:
        dl = float(index.doc_lengths[doc_id])
        avgdl = index.avg_doc_length
        alpha = params.alpha
        length_term = alpha * dl / avgdl + alpha * plan.avg_entropy
        for term, tf in matched:
            st = plan.stats[term]
            fraction = tf * (alpha + 1.0) / (tf + length_term)
            score += counts[term] * st.idf * fraction

    if params.beta > 0:
        s = len(matched) / plan.m
        if s > 0:
            entropy_sum = sum(
                counts[t] * st.norm_entropy for t, st in plan.stats.items()
            )
            score += params.beta * entropy_sum * s
    return score


def _kernel_idf(kernel: str, df: int, n: int, shifted_idf: float) -> float:
    if df == 0:
        return 0.0
    if kernel in ("robertson", "lucene"):
        return shifted_idf
    if kernel == "atire":
        return math.log(n / df)
    if kernel == "bm25plus":
        return math.log((n + 1) / df)
    return math.log((n + 1) / (df + 0.5))  # bm25l


def _kernel_tf(kernel: str, tf: float, length_norm: float, params: Bm25Params) -> float:
    k1 = params.k1
    if kernel == "bm25l":
        c = tf / length_norm
        c_shift = c + params.effective_delta
        return (k1 + 1.0) * c_shift / (k1 + c_shift)
    base_den = tf + k1 * length_norm
    if kernel == "lucene":
        return tf / base_den
    base = tf * (k1 + 1.0) / base_den
    if kernel == "bm25plus":
        return base + params.effective_delta
    return base  # robertson, atire


def bm25_score(
    doc_id: int, plan: QueryPlan, index: InvertedIndex, params: Bm25Params
) -> float:
    """Score one document with the configured BM25 kernel.

    The delta floor of bm25plus/bm25l applies only to terms that occur in
    the document, so zero-overlap documents score 0 under every kernel.
    """
    _check_plan(plan, index)
    if plan.m == 0:
        return 0.0
    matched = _matched_terms(plan, doc_id, index)
    if not matched:
        return 0.0
    counts = _occurrence_counts(plan)
    dl = float(index.doc_lengths[doc_id])
    length_norm = 1.0 - params.b + params.b * dl / index.avg_doc_length
    n = index.doc_count

    score = 0.0
    for term, tf in matched:
        st = plan.stats[term]
        kernel_idf = _kernel_idf(params.kernel, st.doc_frequency, n, st.idf)
        score += counts[term] * kernel_idf * _kernel_tf(
            params.kernel, float(tf), length_norm, params
        )
    return score


def _occurrence_counts(plan: QueryPlan) -> dict[str, int]:
    counts: dict[str, int] = {}
    for tok in plan.tokens:
        counts[tok] = counts.get(tok, 0) + 1
    return counts


def max_score_estimate(m: int, n: int, algo: str) -> float:
    """Estimated maximum score of an m-token query on an n-document corpus.

    Both estimates take the per-token IDF at its maximum (doc frequency 1);
    the bmx estimate adds 1.0 per token for the similarity bonus. The two
    are computed from one shared value so that
    max_score_estimate(m, n, "bmx") - max_score_estimate(m, n, "bm25")
    equals m exactly in floating point (the subtraction of the float m
    from the bmx value is exact, see test suite).
    """
    if m < 1:
        raise ScoringError(f"query length must be >= 1, got {m}")
    if n < 1:
        raise ScoringError(f"corpus size must be >= 1, got {n}")
    if algo not in ("bmx", "bm25"):
        raise ScoringError(f"unknown algo {algo!r}")
    bmx_estimate = m * math.log1p((n - 0.5) / 1.5) + m
    if algo == "bmx":
        return bmx_estimate
    return bmx_estimate - m


def normalize_score(raw: float, max_estimate: float) -> float:
    """Divide by the estimated maximum. Not clamped: the estimate can be
    exceeded slightly (the TF fraction may pass 1 for large F), and the
    overshoot is reported as-is rather than silently destroyed."""
    if not max_estimate > 0:
        raise ScoringError(f"max_estimate must be > 0, got {max_estimate}")
    return raw / max_estimate


# -- vectorized candidate scoring (used by retrieval) -----------------------


def score_candidates(
    plan: QueryPlan,
    candidates: np.ndarray,
    index: InvertedIndex,
    params: BmxParams | Bm25Params,
) -> np.ndarray:
    """Score a sorted array of candidate doc ids in one vectorized pass.

    Produces the same per-document values as bmx_score/bm25_score (same
    per-term accumulation order), independent of which other candidates
    are in the array.
    """
    _check_plan(plan, index)
    scores = np.zeros(len(candidates), dtype=np.float64)
    if plan.m == 0 or len(candidates) == 0:
        return scores
    counts = _occurrence_counts(plan)
    doc_lens = index.doc_lengths[candidates].astype(np.float64)
    n = index.doc_count
    is_bmx = isinstance(params, BmxParams)

    if is_bmx:
        length_term = (
            params.alpha * doc_lens / index.avg_doc_length
            + params.alpha * plan.avg_entropy
        )
    else:
        length_norm = 1.0 - params.b + params.b * doc_lens / index.avg_doc_length

    matched_unique = np.zeros(len(candidates), dtype=np.float64)
    for term, st in plan.stats.items():
        ids, tfs = index.postings_arrays(term)
        if len(ids) == 0:
            continue
        pos = np.searchsorted(candidates, ids)
        # postings may cover docs outside the candidate slice (wqa unions
        # differ per sub-query); keep only actual members.
        valid = (pos < len(candidates)) & (candidates[pos.clip(max=len(candidates) - 1)] == ids)
        pos = pos[valid]
        tf = tfs[valid].astype(np.float64)
        matched_unique[pos] += 1.0
        weight = counts[term]
        if is_bmx:
            fraction = tf * (params.alpha + 1.0) / (tf + length_term[pos])
            scores[pos] += weight * st.idf * fraction
        else:
            kernel_idf = _kernel_idf(params.kernel, st.doc_frequency, n, st.idf)
            scores[pos] += weight * kernel_idf * _kernel_tf_vec(
                params.kernel, tf, length_norm[pos], params
            )

    if is_bmx and params.beta > 0:
        s = matched_unique / plan.m
        entropy_sum = sum(
            counts[t] * st.norm_entropy for t, st in plan.stats.items()
        )
        scores += np.where(s > 0, params.beta * entropy_sum * s, 0.0)
    return scores


def _kernel_tf_vec(
    kernel: str, tf: np.ndarray, length_norm: np.ndarray, params: Bm25Params
) -> np.ndarray:
    k1 = params.k1
    if kernel == "bm25l":
        c = tf / length_norm
        c_shift = c + params.effective_delta
        return (k1 + 1.0) * c_shift / (k1 + c_shift)
    base_den = tf + k1 * length_norm
    if kernel == "lucene":
        return tf / base_den
    base = tf * (k1 + 1.0) / base_den
    if kernel == "bm25plus":
        return base + params.effective_delta
    return base
