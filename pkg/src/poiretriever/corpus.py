"""POI and question data model, JSONL ingestion, and review-sentence selection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geo import GeoDomainError, GeoPoint
from .text import FeatureConfig, count_tokens, feature_matrix, segment_sentences

POI_TYPES = ("restaurant", "attraction", "hotel")


class CorpusError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.field = field


@dataclass(frozen=True)
class PoiName:
    entity: str
    street: str
    city: str
    postcode: str = ""

    def fields(self) -> tuple[tuple[str, str], ...]:
        return (("entity", self.entity), ("street", self.street),
                ("city", self.city), ("postcode", self.postcode))


@dataclass(frozen=True)
class Poi:
    id: str
    name: PoiName
    location: GeoPoint
    poi_type: str
    reviews: tuple[str, ...] = ()
    summary: tuple[str, ...] | None = None

    @property
    def city(self) -> str:
        return self.name.city

    def validate(self) -> None:
        if not self.id:
            raise CorpusError("empty POI id", field="id")
        if not self.name.entity:
            raise CorpusError(f"POI {self.id}: empty entity name", field="name.entity")
        if not self.name.city:
            raise CorpusError(f"POI {self.id}: empty city", field="name.city")
        if self.poi_type not in POI_TYPES:
            raise CorpusError(f"POI {self.id}: unknown type {self.poi_type!r}", field="type")
        if not self.reviews and self.summary is None:
            raise CorpusError(f"POI {self.id}: no reviews and no summary", field="reviews")


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    city: str
    answer_ids: tuple[str, ...]
    tagged_locations: tuple[GeoPoint, ...] | None = None


@dataclass(frozen=True)
class ReviewDigest:
    sentences: tuple[str, ...]
    source: str  # "cluster" | "precomputed_summary"

    @property
    def text(self) -> str:
        return " ".join(self.sentences)

    @property
    def token_count(self) -> int:
        return sum(count_tokens(s) for s in self.sentences)


class PoiCollection:
    """Immutable POI set indexed by id, city and (city, type)."""

    def __init__(self, pois: Iterable[Poi]):
        self.pois: tuple[Poi, ...] = tuple(pois)
        self.by_id: dict[str, Poi] = {}
        self.by_city: dict[str, list[Poi]] = {}
        self.by_city_type: dict[tuple[str, str], list[Poi]] = {}
        for p in self.pois:
            p.validate()
            if p.id in self.by_id:
                raise CorpusError(f"duplicate POI id {p.id!r}", field="id")
            self.by_id[p.id] = p
            self.by_city.setdefault(p.city, []).append(p)
            self.by_city_type.setdefault((p.city, p.poi_type), []).append(p)

    def __len__(self):
        return len(self.pois)

    def __iter__(self):
        return iter(self.pois)

    def __getitem__(self, poi_id: str) -> Poi:
        return self.by_id[poi_id]

    def __eq__(self, other):
        return isinstance(other, PoiCollection) and self.pois == other.pois

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.pois]


# -- JSONL I/O ---------------------------------------------------------------

def poi_to_dict(p: Poi) -> dict:
    d = {
        "id": p.id,
        "name": {"entity": p.name.entity, "street": p.name.street,
                 "city": p.name.city, "postcode": p.name.postcode},
        "lat": p.location.lat,
        "long": p.location.long,
        "type": p.poi_type,
        "reviews": list(p.reviews),
    }
    if p.summary is not None:
        d["summary"] = list(p.summary)
    return d


def _require(obj: dict, key: str, kind, line: int):
    if key not in obj:
        raise CorpusError(f"missing field {key!r}", line=line, field=key)
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise CorpusError(f"field {key!r} has wrong type", line=line, field=key)
    return value


def _str_list(value, key: str, line: int) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
        raise CorpusError(f"field {key!r} must be a list of strings", line=line, field=key)
    return tuple(value)


def poi_from_dict(obj: dict, line: int = 0) -> Poi:
    if not isinstance(obj, dict):
        raise CorpusError("expected a JSON object", line=line)
    name = _require(obj, "name", dict, line)
    try:
        pname = PoiName(entity=str(name.get("entity", "")), street=str(name.get("street", "")),
                        city=str(name.get("city", "")), postcode=str(name.get("postcode", "")))
    except AttributeError as exc:
        raise CorpusError("malformed name record", line=line, field="name") from exc
    lat = _require(obj, "lat", (int, float), line)
    long = _require(obj, "long", (int, float), line)
    try:
        loc = GeoPoint(lat, long)
    except GeoDomainError as exc:
        raise CorpusError(str(exc), line=line, field=exc.field) from exc
    summary = obj.get("summary")
    poi = Poi(
        id=_require(obj, "id", str, line),
        name=pname,
        location=loc,
        poi_type=_require(obj, "type", str, line),
        reviews=_str_list(obj.get("reviews", []), "reviews", line),
        summary=None if summary is None else _str_list(summary, "summary", line),
    )
    try:
        poi.validate()
    except CorpusError as exc:
        raise CorpusError(str(exc), line=line, field=exc.field) from exc
    return poi


def question_to_dict(q: Question) -> dict:
    d = {"id": q.id, "text": q.text, "city": q.city, "answers": list(q.answer_ids)}
    if q.tagged_locations is not None:
        d["tagged_locations"] = [[g.lat, g.long] for g in q.tagged_locations]
    return d


def question_from_dict(obj: dict, line: int = 0) -> Question:
    if not isinstance(obj, dict):
        raise CorpusError("expected a JSON object", line=line)
    answers = _str_list(_require(obj, "answers", list, line), "answers", line)
    if not answers:
        raise CorpusError("question has no answers", line=line, field="answers")
    tagged = obj.get("tagged_locations")
    if tagged is not None:
        try:
            tagged = tuple(GeoPoint(a, b) for a, b in tagged)
        except GeoDomainError as exc:
            raise CorpusError(str(exc), line=line, field=exc.field) from exc
        except (TypeError, ValueError) as exc:
            raise CorpusError("tagged_locations must be [[lat, long], ...]", line=line,
                              field="tagged_locations") from exc
    return Question(
        id=_require(obj, "id", str, line),
        text=_require(obj, "text", str, line),
        city=_require(obj, "city", str, line),
        answer_ids=answers,
        tagged_locations=tagged,
    )


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                yield lineno, json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", line=lineno) from exc


def load_pois(path) -> PoiCollection:
    pois, seen = [], set()
    for lineno, obj in _iter_jsonl(path):
        poi = poi_from_dict(obj, lineno)
        if poi.id in seen:
            raise CorpusError(f"duplicate POI id {poi.id!r}", line=lineno, field="id")
        seen.add(poi.id)
        pois.append(poi)
    return PoiCollection(pois)


def load_questions(path, pois: PoiCollection | None = None) -> list[Question]:
    questions = [question_from_dict(obj, lineno) for lineno, obj in _iter_jsonl(path)]
    if pois is not None:
        validate_questions(questions, pois)
    return questions


def validate_questions(questions: Sequence[Question], pois: PoiCollection) -> None:
    for q in questions:
        for a in q.answer_ids:
            if a not in pois.by_id:
                raise CorpusError(f"question {q.id}: answer {a!r} not in POI collection",
                                  field="answers")
            if pois[a].city != q.city:
                raise CorpusError(f"question {q.id}: answer {a!r} is in {pois[a].city!r}, "
                                  f"not {q.city!r}", field="answers")


def _dump_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in rows)


def save_pois(pois: Iterable[Poi], path) -> None:
    Path(path).write_text(_dump_jsonl(poi_to_dict(p) for p in pois), encoding="utf-8", newline="\n")


def save_questions(questions: Iterable[Question], path) -> None:
    Path(path).write_text(_dump_jsonl(question_to_dict(q) for q in questions),
                          encoding="utf-8", newline="\n")


# -- review selection ----------------------------------------------------------

def kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 50):
    """Lloyd's algorithm with deterministic farthest-point initialisation.

    Returns ``(labels, centroids, objective_trace)``.
    """
    n = X.shape[0]
    k = min(k, n)
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    dmin = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(dmin))  # first maximal index on ties
        chosen.append(nxt)
        dmin = np.minimum(dmin, ((X - X[nxt]) ** 2).sum(axis=1))
    centroids = X[chosen].copy()
    labels = None
    trace = []
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        obj = float(d2[np.arange(n), new_labels].sum())
        assert not trace or obj <= trace[-1] * (1 + 1e-12) + 1e-12, "k-means objective increased"
        trace.append(obj)
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = X[members].mean(axis=0)
    return labels, centroids, trace


def _truncate(sentences: Sequence[str], max_tokens: int) -> tuple[str, ...]:
    out, used = [], 0
    for s in sentences:
        toks = s.split()
        if used + len(toks) <= max_tokens:
            out.append(s)
            used += len(toks)
            continue
        room = max_tokens - used
        if room > 0:
            out.append(" ".join(toks[:room]))
        break
    return tuple(out)


def review_sentences(poi: Poi) -> list[str]:
    return [s for r in poi.reviews for s in segment_sentences(r)]


def select_reviews_cluster(poi: Poi, k_clusters: int = 10, n_per_cluster: int = 10,
                           max_tokens: int = 256, feature_config: FeatureConfig = FeatureConfig(),
                           seed: int = 0) -> ReviewDigest:
    if k_clusters < 1 or n_per_cluster < 1:
        raise ValueError("k_clusters and n_per_cluster must be >= 1")
    sentences = review_sentences(poi)
    if not sentences:
        if poi.summary:
            return ReviewDigest(_truncate(poi.summary, max_tokens), "precomputed_summary")
        raise CorpusError(f"POI {poi.id}: empty POI text", field="reviews")
    if len(sentences) <= k_clusters:
        return ReviewDigest(_truncate(sentences, max_tokens), "cluster")
    X = feature_matrix(sentences, feature_config)
    labels, centroids, _ = kmeans(X, k_clusters, seed=seed)
    picked = []
    for c in range(centroids.shape[0]):
        members = np.flatnonzero(labels == c)
        dist = ((X[members] - centroids[c]) ** 2).sum(axis=1)
        order = members[np.lexsort((members, dist))][:n_per_cluster]
        picked.extend(sentences[i] for i in order)
    return ReviewDigest(_truncate(picked, max_tokens), "cluster")


@dataclass(frozen=True)
class DigestLimits:
    mode: str = "cluster"  # "cluster" | "summary"
    k_clusters: int = 10
    n_per_cluster: int = 10
    max_tokens: int = 256
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)


def poi_text(poi: Poi, mode: str = "cluster", limits: DigestLimits = DigestLimits()) -> ReviewDigest:
    if mode == "summary":
        if poi.summary is None:
            raise CorpusError(f"POI {poi.id}: summary mode requested but no summary present",
                              field="summary")
        return ReviewDigest(_truncate(poi.summary, limits.max_tokens), "precomputed_summary")
    if mode == "cluster":
        return select_reviews_cluster(poi, limits.k_clusters, limits.n_per_cluster,
                                      limits.max_tokens, limits.feature_config)
    raise ValueError(f"unknown text mode {mode!r}")
