"""Deterministic synthetic POI/question corpora for desk-scale experiments.

POIs sit on a per-city street grid: the street name encodes the grid row and
the postcode encodes the column, so location names carry recoverable
geography. Reviews are templated from each POI's tag and never mention the
city; questions name the city and a tag, and every same-city POI sharing the
target's type and tag is an answer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Poi, PoiCollection, PoiName, Question
from .geo import GeoPoint

CITY_CENTERS = (
    ("Dublin", "dub", 53.3498, -6.2603),
    ("Tokyo", "tok", 35.6762, 139.6503),
    ("Lima", "lim", -12.0464, -77.0428),
    ("Cairo", "cai", 30.0444, 31.2357),
    ("Sydney", "syd", -33.8688, 151.2093),
    ("Reykjavik", "rey", 64.1466, -21.9426),
    ("Mumbai", "mum", 19.0760, 72.8777),
    ("Honolulu", "hon", 21.3069, -157.8583),
    ("Moscow", "mos", 55.7558, 37.6173),
    ("Cape Town", "cpt", -33.9249, 18.4241),
    ("Toronto", "tor", 43.6532, -79.3832),
    ("Santiago", "scl", -33.4489, -70.6693),
)

STREET_WORDS = (
    "harbor", "oak", "mill", "church", "station", "market", "bridge", "castle",
    "garden", "river", "king", "queen", "park", "hill", "abbey", "meadow",
)

DEFAULT_TAGS = {
    "restaurant": ("seafood", "vegan", "steak", "sushi", "curry", "pizza"),
    "attraction": ("museum", "garden", "castle", "gallery"),
    "hotel": ("luxury", "budget", "boutique", "spa"),
}

_ENTITY_A = ("golden", "silver", "old", "little", "blue", "red", "royal", "hidden",
             "lucky", "quiet", "grand", "green", "happy", "crooked", "iron", "velvet")
_ENTITY_B = ("anchor", "lantern", "fox", "crown", "door", "kettle", "oak", "swan",
             "barrel", "compass", "feather", "harp", "owl", "bell", "mirror", "tide")

_TAG_SENTENCES = (
    "The {tag} options here were excellent.",
    "Really good {tag} {kind} with friendly staff.",
    "If you like {tag} this is the place to go.",
    "Best {tag} experience we had on the trip.",
    "A solid {tag} {kind}, we would come back.",
)
_FILLER_SENTENCES = (
    "We visited on a rainy afternoon.",
    "Service was quick and polite.",
    "Prices felt fair for what you get.",
    "It was busy but we did not wait long.",
    "The staff spoke several languages.",
    "Booking ahead is a good idea.",
    "Quite noisy at the weekend.",
    "Clean and well looked after.",
)
_QUESTION_TEMPLATES = (
    "Hi, we will be in {city} next month. Can anyone recommend a good {tag} {kind}?",
    "Travelling to {city} with my family. Any suggestions for a {tag} {kind}?",
    "Looking for a {tag} {kind} in {city}, ideally somewhere locals like.",
    "What is the best {tag} {kind} in {city}? Thanks in advance!",
)
_QUESTION_FILLERS = (
    "", " We are staying for three nights.", " Money is not a big concern.",
    " It is our first time abroad.", " We love walking around.",
)

_KIND_WORD = {"restaurant": "restaurant", "attraction": "place to visit", "hotel": "hotel"}


@dataclass(frozen=True)
class SynthSpec:
    n_cities: int = 2
    pois_per_city: int = 10
    questions_per_city: int = 5
    tags: dict = field(default_factory=lambda: dict(DEFAULT_TAGS))
    grid_size: int = 8
    cell_deg: float = 0.01
    reviews_per_poi: int = 3


def _city(i: int, rng: np.random.Generator):
    if i < len(CITY_CENTERS):
        return CITY_CENTERS[i]
    lat = float(np.round(rng.uniform(-60, 60), 4))
    lon = float(np.round(rng.uniform(-170, 170), 4))
    return (f"City{i}", f"c{i:02d}", lat, lon)


def _review(rng: np.random.Generator, tag: str, kind: str) -> str:
    parts = [_TAG_SENTENCES[rng.integers(len(_TAG_SENTENCES))].format(tag=tag, kind=kind)]
    for j in rng.choice(len(_FILLER_SENTENCES), size=2, replace=False):
        parts.append(_FILLER_SENTENCES[j])
    rng.shuffle(parts)
    return " ".join(parts)


def generate_synthetic_corpus(spec: SynthSpec, seed: int = 0) -> tuple[PoiCollection, list[Question]]:
    if spec.n_cities < 1 or spec.pois_per_city < 1 or spec.questions_per_city < 0:
        raise ValueError("SynthSpec needs >= 1 city and >= 1 POI per city")
    if spec.grid_size > len(STREET_WORDS):
        raise ValueError(f"grid_size may not exceed {len(STREET_WORDS)}")
    rng = np.random.default_rng(seed)
    pois: list[Poi] = []
    questions: list[Question] = []
    types = [t for t in ("restaurant", "attraction", "hotel") if spec.tags.get(t)]
    half = (spec.grid_size - 1) / 2.0
    for ci in range(spec.n_cities):
        city, code, clat, clon = _city(ci, rng)
        city_pois = []
        for j in range(spec.pois_per_city):
            row, col = (int(v) for v in rng.integers(spec.grid_size, size=2))
            lat = clat + (row - half) * spec.cell_deg + rng.uniform(-0.3, 0.3) * spec.cell_deg
            lon = clon + (col - half) * spec.cell_deg + rng.uniform(-0.3, 0.3) * spec.cell_deg
            poi_type = types[int(rng.integers(len(types)))]
            tag = spec.tags[poi_type][int(rng.integers(len(spec.tags[poi_type])))]
            entity = (f"{_ENTITY_A[rng.integers(len(_ENTITY_A))]} "
                      f"{_ENTITY_B[rng.integers(len(_ENTITY_B))]}").title()
            name = PoiName(entity=entity, street=f"{STREET_WORDS[row].title()} Street",
                           city=city, postcode=f"{code.upper()}{col}")
            reviews = tuple(_review(rng, tag, poi_type) for _ in range(spec.reviews_per_poi))
            poi = Poi(id=f"{code}_{j:04d}", name=name,
                      location=GeoPoint(round(lat, 6), round(lon, 6)),
                      poi_type=poi_type, reviews=reviews)
            city_pois.append((poi, tag))
        pois.extend(p for p, _ in city_pois)
        for qi in range(spec.questions_per_city):
            target, tag = city_pois[int(rng.integers(len(city_pois)))]
            answers = tuple(p.id for p, t in city_pois
                            if p.poi_type == target.poi_type and t == tag)
            text = (_QUESTION_TEMPLATES[rng.integers(len(_QUESTION_TEMPLATES))]
                    .format(city=city, tag=tag, kind=_KIND_WORD[target.poi_type])
                    + _QUESTION_FILLERS[rng.integers(len(_QUESTION_FILLERS))])
            questions.append(Question(id=f"q_{code}_{qi:04d}", text=text, city=city,
                                      answer_ids=answers,
                                      tagged_locations=(GeoPoint(clat, clon),)))
    return PoiCollection(pois), questions
