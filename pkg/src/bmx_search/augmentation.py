"""Query augmentation: load pre-generated variants or call an LLM endpoint.

Generation speaks a chat-completion style HTTP JSON interface with a
configurable base URL, so any compatible provider (or the stub transport
used in tests and by ``bmx augment --stub``) works. The credential is
read from an environment variable, never from config files.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

logger = logging.getLogger(__name__)

# User-message template sent per query; {size} and {query} are the only
# placeholders. Substitution must not disturb the surrounding JSON braces,
# so rendering uses str.replace, not str.format.
PROMPT_TEMPLATE = (
    "You are an intelligent query augmentation tool. Your task is to augment "
    "each query with {size} similar queries and output JSONL format, like "
    '{"query": "original query", "augmented_queries": ["augmented query 1", '
    '"augmented query 2", ...]}\n'
    "\n"
    "Input query: {query}\n"
    "\n"
    "Output:"
)

DEFAULT_CREDENTIAL_ENV = "BMX_LLM_API_KEY"


class AugmentationError(Exception):
    pass


class AugmentationFileError(AugmentationError):
    """A JSONL augmentation file failed to parse (line numbers included)."""

    def __init__(self, message: str, line_errors: list[tuple[int, str]]):
        super().__init__(message)
        self.line_errors = line_errors


@dataclass(frozen=True)
class AugmentationRecord:
    """One query with its augmented variants (possibly empty, never None).

    ``weights`` is an optional per-query override of the global search
    weight, aligned with ``augmented_queries``; absent means the search
    layer's default applies to every variant.
    """

    query: str
    augmented_queries: tuple[str, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        for q in self.augmented_queries:
            if not q.strip():
                raise AugmentationError(
                    f"blank augmented query for {self.query!r}"
                )
        if self.weights is not None:
            if len(self.weights) != len(self.augmented_queries):
                raise AugmentationError(
                    f"{self.query!r}: {len(self.weights)} weights for "
                    f"{len(self.augmented_queries)} augmented queries"
                )
            for w in self.weights:
                if not 0.0 <= w <= 1.0:
                    raise AugmentationError(
                        f"{self.query!r}: weight {w} outside [0, 1]"
                    )

    def weighted(self, default_weight: float) -> tuple[tuple[str, float], ...]:
        """(query, weight) pairs, filling in the default where unset."""
        weights = self.weights or (default_weight,) * len(self.augmented_queries)
        return tuple(zip(self.augmented_queries, weights))

    def to_json(self) -> str:
        payload: dict = {
            "query": self.query,
            "augmented_queries": list(self.augmented_queries),
        }
        if self.weights is not None:
            payload["weights"] = list(self.weights)
        return json.dumps(payload, ensure_ascii=False)


@dataclass
class GenerationResult:
    """Outcome for one input query: a record, or an error message."""

    query: str
    record: AugmentationRecord | None = None
    error: str | None = None


def render_prompt(query: str, size: int) -> str:
    return PROMPT_TEMPLATE.replace("{size}", str(size)).replace("{query}", query)


def load_augmentations(
    path: str, strict: bool = False
) -> dict[str, AugmentationRecord]:
    """Read a JSONL file of {"query": ..., "augmented_queries": [...]} records.

    Malformed lines are reported with their line number; by default the
    load continues past them and raises a summary error only if asked to
    be strict. Returns a map keyed by the exact query string.
    """
    records: dict[str, AugmentationRecord] = {}
    line_errors: list[tuple[int, str]] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise AugmentationError(f"cannot read augmentations file {path!r}: {exc}")
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = _parse_record(json.loads(line))
            except (json.JSONDecodeError, AugmentationError, TypeError) as exc:
                line_errors.append((line_no, str(exc)))
                continue
            records[record.query] = record
    if line_errors:
        for line_no, message in line_errors:
            logger.warning("%s:%d: %s", path, line_no, message)
        if strict:
            raise AugmentationFileError(
                f"{len(line_errors)} malformed line(s) in {path!r} "
                f"(first: line {line_errors[0][0]}: {line_errors[0][1]})",
                line_errors,
            )
    return records


def _parse_record(data: object) -> AugmentationRecord:
    if not isinstance(data, dict):
        raise AugmentationError("line is not a JSON object")
    if "query" not in data:
        raise AugmentationError("missing 'query' field")
    if "augmented_queries" not in data:
        raise AugmentationError("missing 'augmented_queries' field")
    augmented = data["augmented_queries"]
    if not isinstance(augmented, list) or not all(
        isinstance(q, str) for q in augmented
    ):
        raise AugmentationError("'augmented_queries' must be a list of strings")
    weights = data.get("weights")
    if weights is not None:
        if not isinstance(weights, list) or not all(
            isinstance(w, (int, float)) for w in weights
        ):
            raise AugmentationError("'weights' must be a list of numbers")
        if len(weights) != len(augmented):
            raise AugmentationError(
                f"{len(weights)} weights for {len(augmented)} augmented queries"
            )
        kept = [
            (q.strip(), float(w)) for q, w in zip(augmented, weights) if q.strip()
        ]
        return AugmentationRecord(
            query=str(data["query"]),
            augmented_queries=tuple(q for q, _ in kept),
            weights=tuple(w for _, w in kept),
        )
    return AugmentationRecord(
        query=str(data["query"]),
        augmented_queries=tuple(q.strip() for q in augmented if q.strip()),
    )


def save_augmentations(records: Sequence[AugmentationRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


Transport = Callable[[dict], dict]


@dataclass
class EndpointConfig:
    """How to reach the augmentation model.

    ``transport`` overrides HTTP entirely (used by tests and --stub);
    otherwise ``base_url`` must be set and the credential is read from
    ``credential_env``.
    """

    base_url: str | None = None
    model: str = "gpt-4"
    credential_env: str = DEFAULT_CREDENTIAL_ENV
    temperature: float = 0.0
    extra_options: dict = field(default_factory=dict)
    concurrency: int = 4
    retries: int = 3
    backoff_seconds: float = 1.0
    timeout_seconds: float = 60.0
    transport: Transport | None = None


def _http_transport(config: EndpointConfig) -> Transport:
    import requests

    credential = os.environ.get(config.credential_env)
    if not credential:
        raise AugmentationError(
            f"no credential in ${config.credential_env}; set it or use a "
            "pre-generated file via load_augmentations"
        )
    url = config.base_url.rstrip("/") + "/chat/completions"
    session = requests.Session()

    def send(payload: dict) -> dict:
        response = session.post(
            url,
            json=payload,
            headers={"Authorization": f"Bearer {credential}"},
            timeout=config.timeout_seconds,
        )
        response.raise_for_status()
        return response.json()

    return send


def parse_model_reply(content: str, query: str) -> AugmentationRecord:
    """Extract the first valid record from a model reply.

    Accepts a single JSON object or JSONL; models are inconsistent about
    which they return. The record's own query field is ignored in favor of
    the query we asked about.
    """
    candidates = [line for line in content.splitlines() if line.strip()]
    candidates.append(content.strip())
    for text in candidates:
        try:
            record = _parse_record(json.loads(text))
        except (json.JSONDecodeError, AugmentationError, TypeError):
            continue
        return AugmentationRecord(
            query=query, augmented_queries=record.augmented_queries
        )
    raise AugmentationError("no parseable record in model reply")


def generate_augmentations(
    queries: Sequence[str], size: int, config: EndpointConfig
) -> list[GenerationResult]:
    """Request ``size`` augmented queries for each input query.

    One chat-completion request per query, bounded-parallel; output order
    matches input order. Transport failures retry with exponential backoff
    before turning into per-query error results; the batch never aborts.
    """
    if size < 1:
        raise AugmentationError(f"augmentation size must be >= 1, got {size}")
    if config.transport is not None:
        transport = config.transport
    elif config.base_url:
        transport = _http_transport(config)
    else:
        raise AugmentationError(
            "no endpoint configured (base_url is empty); either configure one "
            "or load pre-generated augmentations with load_augmentations"
        )

    def one(query: str) -> GenerationResult:
        payload = {
            "model": config.model,
            "messages": [{"role": "user", "content": render_prompt(query, size)}],
            "temperature": config.temperature,
            **config.extra_options,
        }
        last_error: Exception | None = None
        for attempt in range(config.retries):
            try:
                reply = transport(payload)
                break
            except Exception as exc:  # transport-level failure
                last_error = exc
                if attempt + 1 < config.retries:
                    time.sleep(config.backoff_seconds * (2**attempt))
        else:
            return GenerationResult(
                query=query, error=f"transport failed after {config.retries} attempts: {last_error}"
            )
        try:
            content = reply["choices"][0]["message"]["content"]
            record = parse_model_reply(content, query)
        except (KeyError, IndexError, TypeError, AugmentationError) as exc:
            return GenerationResult(query=query, error=f"unparseable reply: {exc}")
        if len(record.augmented_queries) < size:
            logger.warning(
                "query %r: got %d augmentations, asked for %d; keeping as-is",
                query,
                len(record.augmented_queries),
                size,
            )
        return GenerationResult(query=query, record=record)

    queries = list(queries)
    if config.concurrency <= 1 or len(queries) < 2:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        return list(pool.map(one, queries))


def stub_transport(size_hint: int | None = None) -> Transport:
    """Deterministic offline transport: echoes the query with numbered
    suffixes. For tests and the CLI --stub flag."""

    def send(payload: dict) -> dict:
        content = payload["messages"][0]["content"]
        query = content.split("Input query: ", 1)[1].rsplit("\n\nOutput:", 1)[0]
        size_text = content.split("query with ", 1)[1].split(" similar", 1)[0]
        size = size_hint if size_hint is not None else int(size_text)
        record = {
            "query": query,
            "augmented_queries": [f"{query} (variant {i})" for i in range(1, size + 1)],
        }
        return {"choices": [{"message": {"content": json.dumps(record)}}]}

    return send
