"""Reference rankers: sort-by-distance, BM25, and coordinate-based location/distance variants."""
from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import DigestLimits, Poi, PoiCollection, Question, poi_text
from .encoders import MlpStack, pad_locations, scale_coords
from .geo import MAX_DISTANCE_KM, GeoPoint, haversine_km_many, normalized_distance
from .index import CandidateFilter, EmbeddingIndex, RankedResult, score_all, top_k
from .text import analyze


class NoTaggedLocationsWarning(UserWarning):
    """Sort-by-distance fell back to id order for a question without tagged locations."""


def _id_keys(ids: Sequence[str]) -> np.ndarray:
    keys = np.empty(len(ids), dtype=np.int64)
    keys[sorted(range(len(ids)), key=list(ids).__getitem__)] = np.arange(len(ids))
    return keys


def _candidate_mask(pois: Sequence[Poi], flt: CandidateFilter | None) -> np.ndarray:
    if flt is None:
        return np.ones(len(pois), dtype=np.uint8)
    return np.array([(flt.city is None or p.city == flt.city)
                     and (flt.poi_type is None or p.poi_type == flt.poi_type)
                     for p in pois], dtype=np.uint8)


def _ranked(ids, scores, rows) -> list[RankedResult]:
    return [RankedResult(ids[r], float(scores[r]), i + 1) for i, r in enumerate(rows)]


# -- sort by distance -------------------------------------------------------------

def distance_scores(question: Question, lats: np.ndarray, longs: np.ndarray) -> np.ndarray | None:
    """Negated km distance to the nearest tagged location, or None without tags."""
    if not question.tagged_locations:
        return None
    dists = np.stack([haversine_km_many(t, lats, longs) for t in question.tagged_locations])
    return -dists.min(axis=0)


def sort_by_distance(question: Question, candidates: Sequence[Poi],
                     k: int | None = None) -> list[RankedResult]:
    candidates = list(candidates)
    ids = [p.id for p in candidates]
    lats = np.array([p.location.lat for p in candidates])
    longs = np.array([p.location.long for p in candidates])
    scores = distance_scores(question, lats, longs)
    if scores is None:
        warnings.warn(f"question {question.id} has no tagged locations; ranking by id",
                      NoTaggedLocationsWarning, stacklevel=2)
        scores = np.zeros(len(candidates))
    rows = top_k(scores, _id_keys(ids), np.ones(len(ids), dtype=np.uint8), k or len(ids))
    return _ranked(ids, scores, rows)


class SortByDistanceRanker:
    def __init__(self, pois: PoiCollection):
        self.pois = list(pois)

    def rank(self, questions, filters, k):
        out = []
        for q, f in zip(questions, filters):
            cands = [p for p, keep in zip(self.pois, _candidate_mask(self.pois, f)) if keep]
            out.append(sort_by_distance(q, cands, k) if cands else [])
        return out


# -- BM25 ------------------------------------------------------------------------

@dataclass
class Bm25Index:
    ids: list[str]
    cities: list[str]
    types: list[str]
    postings: dict[str, list[tuple[int, int]]]
    doc_len: np.ndarray
    avgdl: float
    k1: float = 1.2
    b: float = 0.75

    @property
    def n_docs(self) -> int:
        return len(self.ids)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def scores(self, query_text: str) -> np.ndarray:
        out = np.zeros(self.n_docs)
        norm = self.k1 * (1.0 - self.b + self.b * self.doc_len / self.avgdl)
        for term in analyze(query_text):
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc, tf in plist:
                out[doc] += idf * tf * (self.k1 + 1.0) / (tf + norm[doc])
        return out


def bm25_from_texts(ids, texts, cities=None, types=None, k1=1.2, b=0.75) -> Bm25Index:
    ids = list(ids)
    postings: dict[str, list[tuple[int, int]]] = {}
    lengths = []
    for doc, text in enumerate(texts):
        toks = analyze(text)
        lengths.append(len(toks))
        for term, tf in sorted(Counter(toks).items()):
            postings.setdefault(term, []).append((doc, tf))
    doc_len = np.asarray(lengths, dtype=np.float64)
    avgdl = float(doc_len.mean()) if len(doc_len) else 0.0
    if avgdl <= 0:
        raise ValueError("BM25 needs at least one non-empty document")
    n = len(ids)
    return Bm25Index(ids, list(cities or [""] * n), list(types or [""] * n), postings,
                     doc_len, avgdl, k1, b)


def bm25_build(pois: Sequence[Poi], text_mode: str = "reviews",
               limits: DigestLimits = DigestLimits()) -> Bm25Index:
    """Index each POI by all its reviews (``text_mode="reviews"``) or by its digest."""
    pois = list(pois)
    if text_mode == "reviews":
        texts = [" ".join(p.reviews) if p.reviews else " ".join(p.summary or ()) for p in pois]
    else:
        texts = [poi_text(p, text_mode, limits).text for p in pois]
    return bm25_from_texts([p.id for p in pois], texts, [p.city for p in pois],
                           [p.poi_type for p in pois])


def bm25_search(index: Bm25Index, query_text: str, k: int,
                flt: CandidateFilter | None = None) -> list[RankedResult]:
    if not analyze(query_text):
        return []
    scores = index.scores(query_text)
    mask = np.ones(index.n_docs, dtype=np.uint8)
    if flt is not None:
        mask = np.array([(flt.city is None or c == flt.city)
                         and (flt.poi_type is None or t == flt.poi_type)
                         for c, t in zip(index.cities, index.types)], dtype=np.uint8)
    rows = top_k(scores, _id_keys(index.ids), mask, k)
    return _ranked(index.ids, scores, rows)


class Bm25Ranker:
    def __init__(self, index: Bm25Index):
        self.index = index

    def rank(self, questions, filters, k):
        return [bm25_search(self.index, q.text, k, f) for q, f in zip(questions, filters)]


# -- coordinate-based location / distance modules ------------------------------------

@dataclass(frozen=True)
class GeoMlpConfig:
    m: int = 5
    lam: float = 0.5
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda={self.lam} outside [0, 1]")


def question_location_input(tagged: Sequence[GeoPoint], config: GeoMlpConfig) -> np.ndarray:
    """Flattened, padded (lat, long) vector of length 2m fed to the question location MLP."""
    return pad_locations(tagged, config.m, config.seed)


def encode_question_locations(tagged: Sequence[GeoPoint], config: GeoMlpConfig,
                              mlp: MlpStack) -> np.ndarray:
    x = scale_coords(question_location_input(tagged, config))
    out, _ = mlp.apply(x[None, :])
    return out[0]


def min_normalized_distance(question: Question, poi: Poi) -> float:
    if not question.tagged_locations:
        return 0.0
    return min(normalized_distance(t, poi.location) for t in question.tagged_locations)


def combined_similarity(sim_vec: float, question: Question, poi: Poi, lam: float) -> float:
    """``(1 - lam) * sim_vec - lam * dist`` with dist min-pooled over tagged locations."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda={lam} outside [0, 1]")
    return (1.0 - lam) * sim_vec - lam * min_normalized_distance(question, poi)


class GeoDistRanker:
    """Bi-encoder scores blended with the min normalized distance to tagged locations."""

    def __init__(self, model, index: EmbeddingIndex, pois: PoiCollection, lam: float):
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda={lam} outside [0, 1]")
        self.model = model
        self.index = index
        self.pois = [pois[i] for i in index.ids]
        self.lam = lam
        self.lats = np.array([p.location.lat for p in self.pois])
        self.longs = np.array([p.location.long for p in self.pois])

    def rank(self, questions, filters, k):
        vecs, _ = self.model.encode_questions(self.model.question_inputs(questions))
        out = []
        for q, v, f in zip(questions, vecs, filters):
            sims = score_all(self.index, v)
            neg = distance_scores(q, self.lats, self.longs)
            dist = np.zeros(len(sims)) if neg is None else -neg / MAX_DISTANCE_KM
            scores = (1.0 - self.lam) * sims - self.lam * np.minimum(dist, 1.0)
            rows = top_k(scores, self.index._keys, self.index.mask(f), k)
            out.append(_ranked(self.index.ids, scores, rows))
        return out
