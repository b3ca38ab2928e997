"""Top-k search over an index, with weighted query augmentation.

Candidates are the union of the postings of the query's tokens; every
candidate is scored exhaustively (no pruning), then sorted by score
descending with ties broken by internal doc id ascending. Searches are
read-only over the immutable index and safe to run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ScorerConfig
from .index import InvertedIndex
from .pipeline import tokenize
from .scoring import (
    ScoringError,
    build_query_plan,
    max_score_estimate,
    score_candidates,
)


class SearchError(ValueError):
    pass


class PipelineMismatchError(SearchError):
    """The scorer config tokenizes differently than the index was built."""


@dataclass(frozen=True)
class ScoredHit:
    external_id: str
    internal_id: int
    score: float


@dataclass(frozen=True)
class AugmentedQuerySet:
    """Original query plus weighted augmented variants.

    Weights must lie in [0, 1]; anything else is rejected here, which is
    the single construction point for augmented search inputs.
    """

    original: str
    augmented: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for query, weight in self.augmented:
            if not 0.0 <= weight <= 1.0:
                raise SearchError(
                    f"augmentation weight {weight} for {query!r} outside [0, 1]"
                )

    @property
    def t(self) -> int:
        return len(self.augmented)


def _check_pipeline(index: InvertedIndex, config: ScorerConfig) -> None:
    if config.pipeline is None:
        return
    if config.pipeline.fingerprint() != index.pipeline_config_hash:
        raise PipelineMismatchError(
            "scorer pipeline config does not match the index fingerprint; "
            "rebuild the index or drop the pipeline override"
        )


def _candidate_union(index: InvertedIndex, token_sets: list[list[str]]) -> np.ndarray:
    arrays = []
    seen: set[str] = set()
    for tokens in token_sets:
        for term in tokens:
            if term in seen:
                continue
            seen.add(term)
            ids, _ = index.postings_arrays(term)
            if len(ids):
                arrays.append(ids)
    if not arrays:
        return np.empty(0, dtype=np.uint32)
    return np.unique(np.concatenate(arrays))


def _topk_hits(
    index: InvertedIndex, candidates: np.ndarray, scores: np.ndarray, k: int
) -> list[ScoredHit]:
    # lexsort: last key is primary. Candidates are ascending, so equal
    # scores resolve to the lower internal id.
    order = np.lexsort((candidates, -scores))[:k]
    return [
        ScoredHit(
            external_id=index.external_id(int(doc)),
            internal_id=int(doc),
            score=float(scores[i]),
        )
        for i, doc in zip(order, candidates[order])
    ]


def _scores_for_query(
    tokens: list[str],
    candidates: np.ndarray,
    index: InvertedIndex,
    config: ScorerConfig,
) -> np.ndarray:
    """Scores of all candidates for one (sub-)query, normalized if asked.

    Per-document values do not depend on which other documents are in the
    candidate array, so a document scores identically in a plain search
    and inside a WQA union.
    """
    if not tokens:
        return np.zeros(len(candidates), dtype=np.float64)
    plan = build_query_plan(tokens, index)
    params = config.resolve_params(index)
    scores = score_candidates(plan, candidates, index, params)
    if config.normalize:
        scores = scores / max_score_estimate(plan.m, index.doc_count, config.algo)
    return scores


def search_topk(
    query: str, k: int, index: InvertedIndex, config: ScorerConfig
) -> list[ScoredHit]:
    """Rank the top k documents for a query string.

    Returns fewer than k hits when fewer documents share a token with the
    query; an empty or fully-unindexed query returns no hits.
    """
    if k < 1:
        raise SearchError(f"k must be >= 1, got {k}")
    _check_pipeline(index, config)
    if index.doc_count == 0:
        return []
    tokens = tokenize(query, index.pipeline_config)
    candidates = _candidate_union(index, [tokens])
    if len(candidates) == 0:
        return []
    scores = _scores_for_query(tokens, candidates, index, config)
    return _topk_hits(index, candidates, scores, k)


def search_wqa(
    aug: AugmentedQuerySet, k: int, index: InvertedIndex, config: ScorerConfig
) -> list[ScoredHit]:
    """Rank with the combined score of the original and augmented queries:
    score(D, Q) + sum_i w_i * score(D, Q_i^A), in a single ranking pass
    over the union of all sub-queries' candidates."""
    if k < 1:
        raise SearchError(f"k must be >= 1, got {k}")
    _check_pipeline(index, config)
    if index.doc_count == 0:
        return []
    pipeline = index.pipeline_config
    orig_tokens = tokenize(aug.original, pipeline)
    aug_tokens = [(tokenize(q, pipeline), w) for q, w in aug.augmented]

    candidates = _candidate_union(
        index, [orig_tokens] + [tokens for tokens, _ in aug_tokens]
    )
    if len(candidates) == 0:
        return []
    combined = _scores_for_query(orig_tokens, candidates, index, config)
    for tokens, weight in aug_tokens:
        combined = combined + weight * _scores_for_query(
            tokens, candidates, index, config
        )
    return _topk_hits(index, candidates, combined, k)
