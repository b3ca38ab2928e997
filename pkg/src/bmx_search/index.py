"""Inverted index: build, persist, and load.

The in-memory index is immutable after construction and safe to share
across threads. Postings are kept as parallel numpy arrays (doc ids and
term frequencies, sorted by doc id) so scoring can run vectorized.

Persistence is a single binary file, little-endian, with magic bytes, a
version integer, and length-prefixed sections. The byte layout is
documented in docs/index-format.md; building the same documents in the
same order always produces byte-identical files.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .pipeline import PipelineConfig, tokenize, tokenize_batch

MAGIC = b"BMXI"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


class InvertedIndexError(Exception):
    """Base class for index build and persistence failures."""


class DuplicateDocumentError(InvertedIndexError):
    pass


class IndexFormatError(InvertedIndexError):
    pass


class IndexIOError(InvertedIndexError):
    pass


@dataclass(frozen=True)
class Posting:
    """One (document, term frequency) entry of a postings list; tf >= 1."""

    doc_id: int
    tf: int


class InvertedIndex:
    """Searchable corpus structure with the statistics every scorer needs.

    Attributes:
        doc_count: number of indexed documents (n), empty ones included.
        avg_doc_length: mean token count per document (0.0 for an empty
            corpus; scorers never divide by it unless a term matched,
            which implies a nonzero length somewhere).
        doc_lengths: token count per internal doc id.
        external_ids: internal id -> external string id.
        pipeline_config: the exact tokenization settings used at build.
    """

    def __init__(
        self,
        postings: dict[str, tuple[np.ndarray, np.ndarray]],
        doc_lengths: np.ndarray,
        external_ids: list[str],
        pipeline_config: PipelineConfig,
    ) -> None:
        self._postings = postings
        self.doc_lengths = doc_lengths
        self.external_ids = external_ids
        self._ext_to_int = {ext: i for i, ext in enumerate(external_ids)}
        self.pipeline_config = pipeline_config
        self.pipeline_config_hash = pipeline_config.fingerprint()
        self.doc_count = len(external_ids)
        total = int(doc_lengths.sum()) if self.doc_count else 0
        self.avg_doc_length = total / self.doc_count if self.doc_count else 0.0

    # -- lookups ----------------------------------------------------------

    def __contains__(self, term: str) -> bool:
        return term in self._postings

    @property
    def vocabulary_size(self) -> int:
        return len(self._postings)

    def terms(self) -> Iterator[str]:
        return iter(self._postings)

    def postings_arrays(self, term: str) -> tuple[np.ndarray, np.ndarray]:
        """(doc_ids, tfs) arrays for a term; empty arrays if unseen."""
        entry = self._postings.get(term)
        if entry is None:
            return _EMPTY_IDS, _EMPTY_TFS
        return entry

    def postings(self, term: str) -> list[Posting]:
        ids, tfs = self.postings_arrays(term)
        return [Posting(int(d), int(t)) for d, t in zip(ids, tfs)]

    def doc_frequency(self, term: str) -> int:
        """l(term): number of documents containing the term."""
        return len(self.postings_arrays(term)[0])

    def term_frequency(self, term: str, doc_id: int) -> int:
        """F(term, doc): occurrences of term in the document (0 if absent)."""
        ids, tfs = self.postings_arrays(term)
        pos = np.searchsorted(ids, doc_id)
        if pos < len(ids) and ids[pos] == doc_id:
            return int(tfs[pos])
        return 0

    def external_id(self, doc_id: int) -> str:
        return self.external_ids[doc_id]

    def internal_id(self, external_id: str) -> int:
        return self._ext_to_int[external_id]

    # -- invariant check (used by tests and after load) --------------------

    def check_invariants(self) -> None:
        n = self.doc_count
        if len(self.doc_lengths) != n:
            raise IndexFormatError("doc_lengths length differs from doc_count")
        if n:
            expect = int(self.doc_lengths.sum()) / n
            if abs(expect - self.avg_doc_length) > 1e-9:
                raise IndexFormatError("avg_doc_length inconsistent with doc_lengths")
        for term, (ids, tfs) in self._postings.items():
            if len(ids) != len(tfs):
                raise IndexFormatError(f"postings arrays misaligned for {term!r}")
            if len(ids) == 0:
                raise IndexFormatError(f"empty postings list for {term!r}")
            if np.any(tfs < 1):
                raise IndexFormatError(f"tf < 1 in postings of {term!r}")
            if np.any(np.diff(ids) <= 0):
                raise IndexFormatError(f"postings of {term!r} not strictly increasing")
            if int(ids[-1]) >= n:
                raise IndexFormatError(f"doc id out of range in postings of {term!r}")


_EMPTY_IDS = np.empty(0, dtype=np.uint32)
_EMPTY_TFS = np.empty(0, dtype=np.uint32)


def build_index(
    docs: Iterable[tuple[str, str]],
    config: PipelineConfig,
    workers: int = 1,
    batch_size: int = 512,
) -> InvertedIndex:
    """Build an index from an (external_id, text) stream.

    Internal doc ids are assigned in ingestion order. Tokenization may be
    parallelized with ``workers``; the result is identical regardless of
    worker count because documents are merged in stream order.

    Raises DuplicateDocumentError if an external id repeats.
    """
    postings_lists: dict[str, tuple[list[int], list[int]]] = {}
    doc_lengths: list[int] = []
    external_ids: list[str] = []
    seen: set[str] = set()

    def consume(ext_id: str, tokens: list[str]) -> None:
        if ext_id in seen:
            raise DuplicateDocumentError(f"duplicate document id: {ext_id!r}")
        seen.add(ext_id)
        doc_id = len(external_ids)
        external_ids.append(ext_id)
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            entry = postings_lists.get(term)
            if entry is None:
                entry = ([], [])
                postings_lists[term] = entry
            entry[0].append(doc_id)
            entry[1].append(tf)

    doc_iter = iter(docs)
    while True:
        batch = []
        for _ in range(batch_size):
            try:
                batch.append(next(doc_iter))
            except StopIteration:
                break
        if not batch:
            break
        token_lists = tokenize_batch([text for _, text in batch], config, workers)
        for (ext_id, _), tokens in zip(batch, token_lists):
            consume(ext_id, tokens)

    postings = {
        term: (
            np.asarray(ids, dtype=np.uint32),
            np.asarray(tfs, dtype=np.uint32),
        )
        for term, (ids, tfs) in postings_lists.items()
    }
    return InvertedIndex(
        postings=postings,
        doc_lengths=np.asarray(doc_lengths, dtype=np.uint32),
        external_ids=external_ids,
        pipeline_config=config,
    )


def read_corpus_jsonl(path: str) -> Iterator[tuple[str, str]]:
    """Yield (external_id, text) from a BEIR-style corpus.jsonl.

    Records carry ``_id``, ``title``, ``text``; title and text are joined
    with a single space, title first (empty parts dropped).
    """
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IndexFormatError(
                    f"{path}:{line_no}: invalid JSON: {exc}"
                ) from exc
            if "_id" not in record:
                raise IndexFormatError(f"{path}:{line_no}: missing '_id' field")
            parts = [record.get("title", ""), record.get("text", "")]
            yield str(record["_id"]), " ".join(p for p in parts if p)


# -- persistence -----------------------------------------------------------


def _write_section(out: io.BufferedWriter, payload: bytes) -> None:
    out.write(_U64.pack(len(payload)))
    out.write(payload)


def _read_section(fh: io.BufferedReader, path: str, name: str) -> bytes:
    header = fh.read(8)
    if len(header) != 8:
        raise IndexFormatError(f"{path}: truncated before {name} section")
    (length,) = _U64.unpack(header)
    payload = fh.read(length)
    if len(payload) != length:
        raise IndexFormatError(f"{path}: truncated {name} section")
    return payload


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _U32.pack(len(raw)) + raw


class _Reader:
    def __init__(self, payload: bytes, path: str, name: str) -> None:
        self._buf = payload
        self._pos = 0
        self._ctx = f"{path}: {name} section"

    def take(self, size: int) -> bytes:
        end = self._pos + size
        if end > len(self._buf):
            raise IndexFormatError(f"{self._ctx} truncated")
        chunk = self._buf[self._pos : end]
        self._pos = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def save_index(index: InvertedIndex, path: str, overwrite: bool = False) -> None:
    """Persist an index to a single file (see docs/index-format.md).

    Refuses to replace an existing file unless ``overwrite`` is set.
    Writing is atomic: the data goes to a temp file that is renamed over
    the target only on success.
    """
    if os.path.exists(path) and not overwrite:
        raise IndexIOError(
            f"refusing to overwrite existing index file {path!r} "
            "(pass overwrite=True / --force)"
        )
    tmp_path = path + ".tmp"
    try:
        with open(tmp_path, "wb") as out:
            out.write(MAGIC)
            out.write(_U32.pack(FORMAT_VERSION))

            config_json = json.dumps(
                index.pipeline_config.to_dict(), sort_keys=True, ensure_ascii=False
            )
            stats = (
                _U64.pack(index.doc_count)
                + _F64.pack(index.avg_doc_length)
                + _pack_str(index.pipeline_config_hash)
                + _pack_str(config_json)
            )
            _write_section(out, stats)

            _write_section(
                out, index.doc_lengths.astype("<u4", copy=False).tobytes()
            )

            terms_buf = io.BytesIO()
            terms = sorted(index.terms())
            terms_buf.write(_U64.pack(len(terms)))
            for term in terms:
                ids, tfs = index.postings_arrays(term)
                terms_buf.write(_pack_str(term))
                terms_buf.write(_U64.pack(len(ids)))
                interleaved = np.empty(2 * len(ids), dtype="<u4")
                interleaved[0::2] = ids
                interleaved[1::2] = tfs
                terms_buf.write(interleaved.tobytes())
            _write_section(out, terms_buf.getvalue())

            ids_buf = io.BytesIO()
            ids_buf.write(_U64.pack(len(index.external_ids)))
            for ext in index.external_ids:
                ids_buf.write(_pack_str(ext))
            _write_section(out, ids_buf.getvalue())
        os.replace(tmp_path, path)
    except OSError as exc:
        if os.path.exists(tmp_path):
            try:
                os.remove(tmp_path)
            except OSError:
                pass
        raise IndexIOError(f"failed to write index to {path!r}: {exc}") from exc


def load_index(path: str) -> InvertedIndex:
    """Load an index persisted by save_index; validates all invariants."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IndexIOError(f"failed to open index file {path!r}: {exc}") from exc
    with fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise IndexFormatError(
                f"{path}: not an index file (bad magic {magic!r})"
            )
        version_raw = fh.read(4)
        if len(version_raw) != 4:
            raise IndexFormatError(f"{path}: truncated version field")
        (version,) = _U32.unpack(version_raw)
        if version != FORMAT_VERSION:
            raise IndexFormatError(
                f"{path}: unsupported version {version} "
                f"(this build reads version {FORMAT_VERSION})"
            )

        stats = _Reader(_read_section(fh, path, "stats"), path, "stats")
        doc_count = stats.u64()
        avgdl = stats.f64()
        stored_hash = stats.string()
        config = PipelineConfig.from_dict(json.loads(stats.string()))

        lengths_raw = _read_section(fh, path, "doc_lengths")
        if len(lengths_raw) != 4 * doc_count:
            raise IndexFormatError(f"{path}: doc_lengths size mismatch")
        doc_lengths = np.frombuffer(lengths_raw, dtype="<u4").astype(np.uint32)

        terms = _Reader(_read_section(fh, path, "terms"), path, "terms")
        term_count = terms.u64()
        postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for _ in range(term_count):
            term = terms.string()
            count = terms.u64()
            interleaved = np.frombuffer(terms.take(8 * count), dtype="<u4")
            postings[term] = (
                interleaved[0::2].astype(np.uint32),
                interleaved[1::2].astype(np.uint32),
            )

        idmap = _Reader(_read_section(fh, path, "id_map"), path, "id_map")
        id_count = idmap.u64()
        if id_count != doc_count:
            raise IndexFormatError(f"{path}: id map size differs from doc_count")
        external_ids = [idmap.string() for _ in range(id_count)]

    index = InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        external_ids=external_ids,
        pipeline_config=config,
    )
    if index.pipeline_config_hash != stored_hash:
        raise IndexFormatError(
            f"{path}: stored pipeline hash does not match stored config"
        )
    if abs(index.avg_doc_length - avgdl) > 1e-9:
        raise IndexFormatError(f"{path}: stored avgdl inconsistent")
    index.check_invariants()
    return index
