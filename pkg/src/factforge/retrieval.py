"""Dense passage retrieval: exact top-k over dot-product scores, recall, and
the in-batch contrastive training loss.

The index is a flat matrix scanned exhaustively; no approximate structures.
Ties in score break toward the lexicographically smaller passage id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorruptIndexFile, DimensionMismatch, DuplicatePassageId, EmptyIndex

_MAGIC = b"FFIX"
_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")  # magic, version, dimension, count
_U32 = struct.Struct("<I")


def as_vector(values, dtype=np.float64) -> np.ndarray:
    """Validate and convert one embedding to a 1-D finite float array."""
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"expected 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains non-finite values")
    return arr


@dataclass(frozen=True)
class RankedResult:
    """Passage hits ordered by non-increasing score, then ascending id."""

    hits: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(pid for pid, _ in self.hits)

    def __iter__(self):
        return iter(self.hits)

    def __len__(self) -> int:
        return len(self.hits)


class PassageIndex:
    """Flat dense index mapping passage ids (and texts) to vectors."""

    def __init__(self, ids: Sequence[str], texts: Sequence[str], matrix: np.ndarray):
        if len(ids) != len(texts) or len(ids) != matrix.shape[0]:
            raise ValueError("ids, texts and matrix rows must align")
        if len(ids) == 0:
            raise EmptyIndex("cannot build an index with zero passages")
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-D")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("index vectors contain non-finite values")
        self._pos: dict[str, int] = {}
        for i, pid in enumerate(ids):
            if pid in self._pos:
                raise DuplicatePassageId(f"duplicate passage_id {pid!r}")
            self._pos[pid] = i
        self._ids = list(ids)
        self._texts = list(texts)
        self._matrix = np.ascontiguousarray(matrix, dtype=np.float32)

    @property
    def dimension(self) -> int:
        return int(self._matrix.shape[1])

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def text_of(self, passage_id: str) -> str:
        return self._texts[self._pos[passage_id]]

    def vector_of(self, passage_id: str) -> np.ndarray:
        return self._matrix[self._pos[passage_id]].copy()

    def top_k(self, query_vec, k: int) -> RankedResult:
        """The k entries with highest dot product against query_vec.

        Exhaustive exact scan. Score ties break toward the smaller
        passage id; fewer than k hits are returned when the index is
        smaller than k.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = as_vector(query_vec)
        if q.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"query has dimension {q.shape[0]}, index has {self.dimension}"
            )
        scores = self._matrix @ q  # float64: numpy upcasts to the query dtype
        n = len(self._ids)
        if k < n:
            # Exact top-k: find the k-th largest score, keep everything at or
            # above it (ties included), then order that pool.
            kth = np.partition(scores, n - k)[n - k]
            pool = np.nonzero(scores >= kth)[0]
        else:
            pool = np.arange(n)
        order = sorted(pool, key=lambda i: (-scores[i], self._ids[i]))[:k]
        return RankedResult(tuple((self._ids[i], float(scores[i])) for i in order))

    def save(self, path: str | Path) -> None:
        """Persist to a binary file.

        Layout: header (magic, version, dimension, count), then one record
        per passage: length-prefixed id bytes, length-prefixed text bytes,
        then dimension little-endian float32 values.
        """
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, self.dimension, len(self._ids)))
            for pid, text, row in zip(self._ids, self._texts, self._matrix):
                id_bytes = pid.encode("utf-8")
                text_bytes = text.encode("utf-8")
                fh.write(_U32.pack(len(id_bytes)))
                fh.write(id_bytes)
                fh.write(_U32.pack(len(text_bytes)))
                fh.write(text_bytes)
                fh.write(row.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "PassageIndex":
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size:
            raise CorruptIndexFile("file shorter than header")
        magic, version, dim, count = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC or version != _VERSION:
            raise CorruptIndexFile("bad magic or unsupported version")
        offset = _HEADER.size
        ids: list[str] = []
        texts: list[str] = []
        rows = np.empty((count, dim), dtype=np.float32)
        try:
            for i in range(count):
                (id_len,) = _U32.unpack_from(data, offset)
                offset += _U32.size
                ids.append(data[offset : offset + id_len].decode("utf-8"))
                offset += id_len
                (text_len,) = _U32.unpack_from(data, offset)
                offset += _U32.size
                texts.append(data[offset : offset + text_len].decode("utf-8"))
                offset += text_len
                rows[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
                offset += 4 * dim
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise CorruptIndexFile(f"truncated or corrupt record: {exc}") from exc
        if offset != len(data):
            raise CorruptIndexFile("trailing bytes after final record")
        return cls(ids, texts, rows)


def index_build(passages: Iterable, embedder) -> PassageIndex:
    """Embed passages and build the index.

    Accepts Passage objects or (passage_id, text) pairs. All embeddings
    must share one dimension; duplicate ids and empty input are errors.
    """
    ids: list[str] = []
    texts: list[str] = []
    for p in passages:
        if hasattr(p, "passage_id"):
            ids.append(p.passage_id)
            texts.append(p.text)
        else:
            pid, text = p
            ids.append(pid)
            texts.append(text)
    if not ids:
        raise EmptyIndex("cannot build an index with zero passages")
    vectors = embedder.embed(texts)
    dim = None
    rows = []
    for pid, vec in zip(ids, vectors):
        arr = as_vector(vec, dtype=np.float32)
        if dim is None:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise DimensionMismatch(
                f"passage {pid!r} embedded with dimension {arr.shape[0]}, expected {dim}"
            )
        rows.append(arr)
    return PassageIndex(ids, texts, np.vstack(rows))


def recall_at_k(results: RankedResult, relevant: set[str] | Iterable[str], k: int | None = None) -> float:
    """Fraction of relevant passage ids present among the top-k hits."""
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    ids = results.ids if k is None else results.ids[:k]
    return len(relevant.intersection(ids)) / len(relevant)


def in_batch_loss(claim_vecs, positive_vecs) -> float:
    """Contrastive loss over a batch where each claim's positive passage is
    everyone else's in-batch negative.

    For batch row i with scores s_ij = claim_i . passage_j, the loss term is
    -log(exp(s_ii) / sum_j exp(s_ij)); the total is the sum over rows,
    computed with max-subtraction for numerical stability. A batch of one
    is exactly 0.
    """
    c = np.asarray(claim_vecs, dtype=np.float64)
    p = np.asarray(positive_vecs, dtype=np.float64)
    if c.ndim != 2 or p.ndim != 2:
        raise ValueError("expected 2-D arrays (batch, dimension)")
    if c.shape[0] != p.shape[0]:
        raise ValueError(f"batch sizes differ: {c.shape[0]} vs {p.shape[0]}")
    if c.shape[1] != p.shape[1]:
        raise DimensionMismatch(f"dimensions differ: {c.shape[1]} vs {p.shape[1]}")
    if c.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(p))):
        raise ValueError("vectors contain non-finite values")
    scores = c @ p.T
    row_max = scores.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(scores - row_max).sum(axis=1))
    return float(np.sum(lse - np.diag(scores)))
