"""Persisted POI embedding index with filtered exact top-k inner-product search."""
from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import DigestLimits, Poi
from .errors import BadMagicError, FormatError, ShapeError, TruncatedError, VersionMismatchError

INDEX_MAGIC = b"LAMBIDX1"
INDEX_VERSION_TAG = b"LAMBIDX"
SCORE_CHUNK = 4096


@dataclass(frozen=True)
class RankedResult:
    poi_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class CandidateFilter:
    city: str | None = None
    poi_type: str | None = None


@dataclass
class EmbeddingIndex:
    ids: list[str]
    cities: list[str]
    types: list[str]
    vectors: np.ndarray  # float32, (n, d)
    fingerprint: str
    _keys: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        n = len(self.ids)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != n:
            raise ShapeError(f"vectors shape {self.vectors.shape} does not match {n} ids")
        if not (len(self.cities) == len(self.types) == n):
            raise ShapeError("metadata arrays must match the number of ids")
        if len(set(self.ids)) != n:
            raise ValueError("index ids must be unique")
        if not self.fingerprint:
            raise ValueError("index fingerprint must be non-empty")
        # Tie-break key: position of each id in ascending id order.
        keys = np.empty(n, dtype=np.int64)
        keys[sorted(range(n), key=self.ids.__getitem__)] = np.arange(n)
        self._keys = keys

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        return (isinstance(other, EmbeddingIndex) and self.ids == other.ids
                and self.cities == other.cities and self.types == other.types
                and self.fingerprint == other.fingerprint
                and self.vectors.dtype == other.vectors.dtype
                and np.array_equal(self.vectors, other.vectors))

    def mask(self, flt: CandidateFilter | None) -> np.ndarray:
        m = np.ones(len(self.ids), dtype=np.uint8)
        if flt is not None:
            if flt.city is not None:
                m &= np.fromiter((c == flt.city for c in self.cities), dtype=np.uint8,
                                 count=len(self.ids))
            if flt.poi_type is not None:
                m &= np.fromiter((t == flt.poi_type for t in self.types), dtype=np.uint8,
                                 count=len(self.ids))
        return m


def build_index(model, pois: Sequence[Poi], limits: DigestLimits = DigestLimits()) -> EmbeddingIndex:
    pois = list(pois)
    inputs = model.poi_inputs(pois, limits)
    vecs, _ = model.encode_pois(inputs)
    return EmbeddingIndex([p.id for p in pois], [p.city for p in pois],
                          [p.poi_type for p in pois], vecs.astype(np.float32),
                          model.fingerprint())


def score_all(index: EmbeddingIndex, query: np.ndarray, threads: int = 1) -> np.ndarray:
    """Inner products in float64, computed in fixed-size chunks so threading never changes bits."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ShapeError(f"query dim {q.shape} does not match index dim {index.dim}")
    n = len(index)
    bounds = [(s, min(s + SCORE_CHUNK, n)) for s in range(0, n, SCORE_CHUNK)]

    def chunk(b):
        return index.vectors[b[0] : b[1]].astype(np.float64) @ q

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(chunk, bounds))
    else:
        parts = [chunk(b) for b in bounds]
    return np.concatenate(parts) if parts else np.zeros(0)


def top_k(scores: np.ndarray, keys: np.ndarray, mask: np.ndarray, k: int) -> np.ndarray:
    return kernels.topk_indices(np.ascontiguousarray(scores, dtype=np.float64),
                                np.ascontiguousarray(keys, dtype=np.int64),
                                np.ascontiguousarray(mask, dtype=np.uint8), int(k))


def search(index: EmbeddingIndex, query_vec: np.ndarray, k: int,
           flt: CandidateFilter | None = None, threads: int = 1) -> list[RankedResult]:
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = score_all(index, query_vec, threads)
    rows = top_k(scores, index._keys, index.mask(flt), k)
    return [RankedResult(index.ids[r], float(scores[r]), i + 1) for i, r in enumerate(rows)]


def index_bytes(index: EmbeddingIndex) -> bytes:
    n, d = index.vectors.shape
    trailer = json.dumps({"ids": index.ids, "cities": index.cities, "types": index.types,
                          "fingerprint": index.fingerprint},
                         sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([INDEX_MAGIC, struct.pack("<II", n, d), index.vectors.astype("<f4").tobytes(),
                     struct.pack("<Q", len(trailer)), trailer])


def save_index(index: EmbeddingIndex, path) -> bytes:
    data = index_bytes(index)
    Path(path).write_bytes(data)
    return data


def parse_index(data: bytes) -> EmbeddingIndex:
    if len(data) < 8 or data[:8] != INDEX_MAGIC:
        if data[:7] == INDEX_VERSION_TAG:
            raise VersionMismatchError(f"unsupported index version {data[7:8]!r}")
        raise BadMagicError("bad magic: not an embedding index file")
    if len(data) < 16:
        raise TruncatedError("truncated index header")
    n, d = struct.unpack_from("<II", data, 8)
    end = 16 + 4 * n * d
    if len(data) < end:
        raise TruncatedError("truncated vector block")
    vectors = np.frombuffer(data[16:end], dtype="<f4").astype(np.float32).reshape(n, d)
    if len(data) < end + 8:
        raise TruncatedError("truncated trailer length")
    (tlen,) = struct.unpack_from("<Q", data, end)
    if len(data) < end + 8 + tlen:
        raise TruncatedError("truncated metadata trailer")
    if len(data) > end + 8 + tlen:
        raise FormatError("trailing bytes after index trailer")
    try:
        meta = json.loads(data[end + 8 : end + 8 + tlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt index trailer: {exc}") from exc
    return EmbeddingIndex(meta["ids"], meta["cities"], meta["types"], vectors, meta["fingerprint"])


def load_index(path) -> EmbeddingIndex:
    return parse_index(Path(path).read_bytes())
