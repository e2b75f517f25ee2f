"""Exact nearest-neighbor search over a matrix of unit vectors.

Brute-force cosine scan, chunked so it can fan out over a thread pool.
Results are exact and deterministic: every row's score is computed
independently, candidates are ordered by (-score, id), and chunk
boundaries are fixed by ``chunk_size`` rather than by the thread count,
so 1, 2, or 8 threads return identical rankings.

Embedding file format (little-endian): 4-byte magic ``OEV1``, u32
version, u64 count, u64 dim, then per id a u32 byte length plus UTF-8
bytes, then the vectors as row-major float32.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "EmbeddingMatrix",
    "SearchResult",
    "DuplicateIdError",
    "ZeroVectorError",
    "topk",
    "topk_batch",
]

_MAGIC = b"OEV1"
_VERSION = 1
DEFAULT_CHUNK_SIZE = 4096


class DuplicateIdError(ValueError):
    def __init__(self, dup_id: str):
        super().__init__(f"duplicate identifier in embedding set: {dup_id!r}")
        self.dup_id = dup_id


class ZeroVectorError(ValueError):
    def __init__(self, which: str):
        super().__init__(f"zero vector cannot be normalized: {which}")


@dataclass
class EmbeddingMatrix:
    """Unit-row matrix with stable string identifiers."""

    ids: list[str]
    vectors: np.ndarray  # (n, dim) float32, rows unit-norm
    id_to_row: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.id_to_row = {}
        for row, ident in enumerate(self.ids):
            if ident in self.id_to_row:
                raise DuplicateIdError(ident)
            self.id_to_row[ident] = row
        if self.vectors.shape[0] != len(self.ids):
            raise ValueError(f"{len(self.ids)} ids but {self.vectors.shape[0]} vectors")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def build(cls, ids, vectors) -> "EmbeddingMatrix":
        """Normalize rows and index them; rejects duplicates and zero rows."""
        ids = [str(i) for i in ids]
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError(f"expected a 2-d vector array, got shape {vectors.shape}")
        norms = np.linalg.norm(vectors, axis=1)
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise ZeroVectorError(f"id {ids[bad[0]]!r}")
        return cls(ids=ids, vectors=vectors / norms[:, None])

    def row(self, ident: str) -> np.ndarray:
        try:
            return self.vectors[self.id_to_row[ident]]
        except KeyError:
            raise KeyError(f"unknown identifier: {ident!r}") from None

    def __contains__(self, ident: str) -> bool:
        return ident in self.id_to_row

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQQ", _VERSION, len(self.ids), self.dim))
            for ident in self.ids:
                raw = ident.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(np.ascontiguousarray(self.vectors, dtype="<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        blob = Path(path).read_bytes()
        if blob[:4] != _MAGIC:
            raise ValueError(f"{path}: not an embedding file (bad magic)")
        version, count, dim = struct.unpack_from("<IQQ", blob, 4)
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported embedding file version {version}")
        offset = 4 + struct.calcsize("<IQQ")
        ids = []
        for _ in range(count):
            (length,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            ids.append(blob[offset:offset + length].decode("utf-8"))
            offset += length
        vectors = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset)
        return cls(ids=ids, vectors=vectors.reshape(count, dim).copy())


@dataclass
class SearchResult:
    ids: list[str]
    scores: np.ndarray
    clamped: bool = False  # True when k exceeded the collection size


def _normalize_query(query: np.ndarray, dim: int) -> np.ndarray:
    q = np.asarray(query, dtype=np.float32).reshape(-1)
    if q.shape[0] != dim:
        raise ValueError(f"query dim {q.shape[0]} != index dim {dim}")
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ZeroVectorError("query")
    return q / norm


def _chunk_candidates(matrix: EmbeddingMatrix, q: np.ndarray, k: int,
                      start: int, stop: int) -> list[tuple[float, str]]:
    scores = matrix.vectors[start:stop] @ q
    if stop - start > k:
        # Keep everything tied with the k-th best so a later merge never
        # drops a row that id-order tie-breaking would have ranked inside k.
        threshold = np.partition(scores, len(scores) - k)[len(scores) - k]
        keep = np.flatnonzero(scores >= threshold)
    else:
        keep = np.arange(stop - start)
    return [(float(scores[i]), matrix.ids[start + i]) for i in keep]


def topk(matrix: EmbeddingMatrix, query, k: int, *, threads: int = 1,
         chunk_size: int = DEFAULT_CHUNK_SIZE) -> SearchResult:
    """Exact top-k by cosine, ranked by (-score, id).

    The id tie-break makes the ranking a total order, which is what makes
    the result independent of chunking and thread scheduling.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(matrix) == 0:
        raise ValueError("empty embedding matrix")
    clamped = k > len(matrix)
    k_eff = min(k, len(matrix))
    q = _normalize_query(query, matrix.dim)

    spans = [(s, min(s + chunk_size, len(matrix))) for s in range(0, len(matrix), chunk_size)]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda sp: _chunk_candidates(matrix, q, k_eff, *sp), spans))
    else:
        parts = [_chunk_candidates(matrix, q, k_eff, *sp) for sp in spans]

    merged = [cand for part in parts for cand in part]
    merged.sort(key=lambda c: (-c[0], c[1]))
    top = merged[:k_eff]
    return SearchResult(
        ids=[ident for _, ident in top],
        scores=np.array([score for score, _ in top], dtype=np.float32),
        clamped=clamped,
    )


def topk_batch(matrix: EmbeddingMatrix, queries, k: int, *, threads: int = 1,
               chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[SearchResult]:
    """Top-k for each query row; parallelism goes across queries."""
    queries = np.asarray(queries, dtype=np.float32)
    if queries.ndim != 2:
        raise ValueError(f"expected a 2-d query array, got shape {queries.shape}")
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(
                lambda q: topk(matrix, q, k, threads=1, chunk_size=chunk_size), queries))
    return [topk(matrix, q, k, threads=1, chunk_size=chunk_size) for q in queries]
