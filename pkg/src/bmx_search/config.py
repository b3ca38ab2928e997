"""Engine configuration: scorer selection plus layered loading.

Precedence is CLI flag > config file > built-in default. The config file
is JSON with the sections documented in the README (``pipeline``,
``scorer``, ``wqa``, ``paths``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .pipeline import PipelineConfig, load_stopword_file

ALGOS = ("bmx", "bm25")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScorerConfig:
    """Which algorithm scores candidates, with its parameters.

    For bmx, alpha/beta left as None resolve to the dynamic defaults
    computed from the index statistics (avgdl and corpus size) at search
    time. ``pipeline`` is optional; when set, searches verify it matches
    the index fingerprint.
    """

    algo: str = "bmx"
    alpha: float | None = None
    beta: float | None = None
    k1: float = 1.2
    b: float = 0.75
    delta: float | None = None
    kernel: str = "robertson"
    normalize: bool = False
    pipeline: PipelineConfig | None = None

    def __post_init__(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGOS}")

    def resolve_params(self, index):
        """Concrete scoring parameters for a given index."""
        from .scoring import Bm25Params, BmxParams, default_alpha, default_beta

        if self.algo == "bmx":
            alpha = self.alpha
            beta = self.beta
            if alpha is None:
                alpha = default_alpha(index.avg_doc_length)
            if beta is None:
                beta = default_beta(index.doc_count)
            return BmxParams(alpha=alpha, beta=beta)
        return Bm25Params(k1=self.k1, b=self.b, delta=self.delta, kernel=self.kernel)


@dataclass
class WqaConfig:
    enabled: bool = False
    default_weight: float = 0.5
    augmentations_path: str | None = None


@dataclass
class EngineConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    wqa: WqaConfig = field(default_factory=WqaConfig)
    index_path: str | None = None
    dataset_dir: str | None = None
    output_dir: str | None = None
    # True when the file or CLI actually set pipeline options; searches
    # against a persisted index only verify the pipeline when the user
    # asked for one, otherwise the index's stored config applies.
    pipeline_overridden: bool = False


_PIPELINE_KEYS = {
    "lowercase",
    "strip_punctuation",
    "stopwords",
    "stopwords_file",
    "stemmer",
    "token_splitter",
}
_SCORER_KEYS = {"algo", "alpha", "beta", "k1", "b", "delta", "kernel", "normalize"}
_WQA_KEYS = {"enabled", "default_weight", "augmentations_path"}
_PATH_KEYS = {"index", "dataset", "output"}


def _build_pipeline(settings: dict[str, Any]) -> PipelineConfig:
    unknown = set(settings) - _PIPELINE_KEYS
    if unknown:
        raise ConfigError(f"unknown pipeline settings: {sorted(unknown)}")
    kwargs = dict(settings)
    path = kwargs.pop("stopwords_file", None)
    if path is not None:
        if "stopwords" in kwargs:
            raise ConfigError("give either 'stopwords' or 'stopwords_file', not both")
        kwargs["stopwords"] = load_stopword_file(path)
    elif "stopwords" in kwargs:
        kwargs["stopwords"] = frozenset(kwargs["stopwords"])
    try:
        return PipelineConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_engine_config(
    path: str | None = None, overrides: dict[str, Any] | None = None
) -> EngineConfig:
    """Assemble an EngineConfig from defaults, a JSON file, and overrides.

    ``overrides`` uses the same nested shape as the file; values set there
    win over the file, which wins over the built-in defaults.
    """
    layers: list[dict[str, Any]] = []
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path!r} must hold a JSON object")
        layers.append(data)
    if overrides:
        layers.append(overrides)

    pipeline_settings: dict[str, Any] = {}
    scorer_settings: dict[str, Any] = {}
    wqa_settings: dict[str, Any] = {}
    path_settings: dict[str, Any] = {}
    for layer in layers:
        unknown = set(layer) - {"pipeline", "scorer", "wqa", "paths"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        pipeline_settings.update(layer.get("pipeline", {}))
        scorer_settings.update(layer.get("scorer", {}))
        wqa_settings.update(layer.get("wqa", {}))
        path_settings.update(layer.get("paths", {}))

    unknown = set(scorer_settings) - _SCORER_KEYS
    if unknown:
        raise ConfigError(f"unknown scorer settings: {sorted(unknown)}")
    unknown = set(wqa_settings) - _WQA_KEYS
    if unknown:
        raise ConfigError(f"unknown wqa settings: {sorted(unknown)}")
    unknown = set(path_settings) - _PATH_KEYS
    if unknown:
        raise ConfigError(f"unknown path settings: {sorted(unknown)}")

    pipeline = _build_pipeline(pipeline_settings)
    try:
        scorer = ScorerConfig(pipeline=pipeline, **scorer_settings)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    wqa = WqaConfig(**wqa_settings)
    if not 0.0 <= wqa.default_weight <= 1.0:
        raise ConfigError(
            f"wqa default_weight must be in [0, 1], got {wqa.default_weight}"
        )
    return EngineConfig(
        pipeline=pipeline,
        scorer=scorer,
        wqa=wqa,
        index_path=path_settings.get("index"),
        dataset_dir=path_settings.get("dataset"),
        output_dir=path_settings.get("output"),
        pipeline_overridden=bool(pipeline_settings),
    )
