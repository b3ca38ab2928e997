"""Lexical search with the BMX ranking algorithm and classic BM25 kernels."""

from .augmentation import (
    AugmentationRecord,
    EndpointConfig,
    generate_augmentations,
    load_augmentations,
)
from .config import EngineConfig, ScorerConfig, load_engine_config
from .evaluation import (
    load_beir_dataset,
    ndcg_at_k,
    recall_at_k,
    run_eval,
    timing_report,
)
from .index import InvertedIndex, build_index, load_index, save_index
from .pipeline import PipelineConfig, tokenize
from .retrieval import AugmentedQuerySet, ScoredHit, search_topk, search_wqa
from .scoring import (
    Bm25Params,
    BmxParams,
    bm25_score,
    bmx_score,
    build_query_plan,
    default_alpha,
    default_beta,
    idf,
    max_score_estimate,
    normalize_score,
    similarity,
    token_raw_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationRecord",
    "AugmentedQuerySet",
    "Bm25Params",
    "BmxParams",
    "EndpointConfig",
    "EngineConfig",
    "InvertedIndex",
    "PipelineConfig",
    "ScoredHit",
    "ScorerConfig",
    "bm25_score",
    "bmx_score",
    "build_index",
    "build_query_plan",
    "default_alpha",
    "default_beta",
    "generate_augmentations",
    "idf",
    "load_augmentations",
    "load_beir_dataset",
    "load_engine_config",
    "load_index",
    "max_score_estimate",
    "ndcg_at_k",
    "normalize_score",
    "recall_at_k",
    "run_eval",
    "save_index",
    "search_topk",
    "search_wqa",
    "similarity",
    "timing_report",
    "token_raw_entropy",
    "tokenize",
]
