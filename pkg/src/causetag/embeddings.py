"""File-backed per-token embedding store.

Contextual embeddings are precomputed and frozen; the tagger only ever
reads them. The on-disk CEMB format is bit-exact and canonically ordered so
exports are diffable:

CEMB v1 layout (all integers little-endian):
    bytes 0-3   magic, ASCII "CEMB"
    u32         version = 1
    u32         dim
    u64         record count
    per record:
        u16     id byte length
        bytes   id (UTF-8)
        u32     token count T
        f32[..] T * dim IEEE-754 floats, row-major

Records are sorted by id ascending bytewise. A deterministic hash-seeded
provider stands in for real contextual embeddings in tests.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sentence

MAGIC = b"CEMB"
VERSION = 1


class EmbeddingError(ValueError):
    """Malformed CEMB data or store/corpus disagreement."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-sentence T x dim float32 matrix; row i embeds token i."""

    sentence_id: str
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise EmbeddingError(f"{self.sentence_id!r}: embedding matrix must be 2-D")
        if self.values.dtype != np.float32:
            object.__setattr__(self, "values", self.values.astype(np.float32))
        if not np.all(np.isfinite(self.values)):
            raise EmbeddingError(f"{self.sentence_id!r}: non-finite embedding value")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_tokens(self) -> int:
        return self.values.shape[0]


class EmbeddingStore:
    """Immutable map sentence_id -> EmbeddingMatrix with a uniform dim."""

    def __init__(self, dim: int, matrices):
        if dim < 1:
            raise EmbeddingError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self._entries: dict[str, EmbeddingMatrix] = {}
        for mat in matrices:
            if mat.dim != self.dim:
                raise EmbeddingError(
                    f"{mat.sentence_id!r}: dim {mat.dim} != store dim {self.dim}"
                )
            if mat.sentence_id in self._entries:
                raise EmbeddingError(f"duplicate sentence id {mat.sentence_id!r}")
            self._entries[mat.sentence_id] = mat

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self._entries

    def ids(self):
        return self._entries.keys()

    def lookup(self, sentence: Sentence) -> EmbeddingMatrix:
        """Fetch the stored matrix; error on unknown id or token-count drift."""
        mat = self._entries.get(sentence.id)
        if mat is None:
            raise EmbeddingError(f"no embedding for sentence id {sentence.id!r}")
        if mat.n_tokens != len(sentence):
            raise EmbeddingError(
                f"sentence {sentence.id!r}: store has {mat.n_tokens} rows "
                f"but the sentence has {len(sentence)} tokens"
            )
        return mat


class StoreSet:
    """Dispatches lookups to one store per dataset name.

    Lets experiments train on sentences pooled from several corpora while
    each corpus keeps its own embedding file. All member stores must agree
    on dim.
    """

    def __init__(self, stores: dict[str, EmbeddingStore]):
        if not stores:
            raise EmbeddingError("store set is empty")
        dims = {store.dim for store in stores.values()}
        if len(dims) != 1:
            raise EmbeddingError(f"stores disagree on dim: {sorted(dims)}")
        self.dim = dims.pop()
        self._stores = dict(stores)

    def lookup(self, sentence: Sentence) -> EmbeddingMatrix:
        store = self._stores.get(sentence.dataset)
        if store is None:
            raise EmbeddingError(f"no embedding store for dataset {sentence.dataset!r}")
        return store.lookup(sentence)


def _take(buf: memoryview, offset: int, size: int, what: str) -> tuple[memoryview, int]:
    if offset + size > len(buf):
        raise EmbeddingError(f"truncated file while reading {what}")
    return buf[offset : offset + size], offset + size


def read_embedding_file(data: bytes) -> EmbeddingStore:
    """Decode CEMB bytes into a store; inverse of write_embedding_file."""
    buf = memoryview(data)
    chunk, offset = _take(buf, 0, 4, "magic")
    if bytes(chunk) != MAGIC:
        raise EmbeddingError(f"bad magic {bytes(chunk)!r}, expected {MAGIC!r}")
    chunk, offset = _take(buf, offset, 16, "header")
    version, dim, count = struct.unpack("<IIQ", chunk)
    if version != VERSION:
        raise EmbeddingError(f"unsupported CEMB version {version}")
    matrices = []
    for _ in range(count):
        chunk, offset = _take(buf, offset, 2, "id length")
        (id_len,) = struct.unpack("<H", chunk)
        chunk, offset = _take(buf, offset, id_len, "id")
        sentence_id = bytes(chunk).decode("utf-8")
        chunk, offset = _take(buf, offset, 4, "token count")
        (n_tokens,) = struct.unpack("<I", chunk)
        chunk, offset = _take(buf, offset, n_tokens * dim * 4, f"floats of {sentence_id!r}")
        values = np.frombuffer(chunk, dtype="<f4").reshape(n_tokens, dim).copy()
        matrices.append(EmbeddingMatrix(sentence_id, values))
    if offset != len(buf):
        raise EmbeddingError(f"{len(buf) - offset} trailing bytes after last record")
    return EmbeddingStore(dim, matrices)


def write_embedding_file(store: EmbeddingStore) -> bytes:
    """Canonical CEMB encoding: records sorted by id ascending bytewise."""
    parts = [MAGIC, struct.pack("<IIQ", VERSION, store.dim, len(store))]
    for sentence_id in sorted(store.ids(), key=lambda s: s.encode("utf-8")):
        mat = store._entries[sentence_id]
        id_bytes = sentence_id.encode("utf-8")
        parts.append(struct.pack("<H", len(id_bytes)))
        parts.append(id_bytes)
        parts.append(struct.pack("<I", mat.n_tokens))
        parts.append(np.ascontiguousarray(mat.values, dtype="<f4").tobytes())
    return b"".join(parts)


def load_store(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        return read_embedding_file(fh.read())


def save_store(store: EmbeddingStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_embedding_file(store))


def _token_vector(surface: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(
        f"{seed}:{surface.lower()}".encode("utf-8"), digest_size=8
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.uniform(-1.0, 1.0, size=dim).astype(np.float32)


def hash_embeddings(corpus: Corpus, dim: int, seed: int) -> EmbeddingStore:
    """Deterministic pseudo-random embeddings keyed by lowercased surface form.

    The same word form always maps to the same vector (for a given seed and
    dim), which makes simple token->label patterns learnable in tests
    without any transformer runtime. Values lie in [-1, 1].
    """
    if dim < 1:
        raise EmbeddingError(f"dim must be >= 1, got {dim}")
    cache: dict[str, np.ndarray] = {}
    matrices = []
    for sent in corpus:
        rows = []
        for tok in sent.tokens:
            key = tok.surface.lower()
            vec = cache.get(key)
            if vec is None:
                vec = _token_vector(tok.surface, dim, seed)
                cache[key] = vec
            rows.append(vec)
        matrices.append(EmbeddingMatrix(sent.id, np.stack(rows)))
    return EmbeddingStore(dim, matrices)
