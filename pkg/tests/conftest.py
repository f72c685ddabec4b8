import numpy as np
import pytest

from poiretriever.corpus import Poi, PoiCollection, PoiName, Question
from poiretriever.geo import GeoPoint
from poiretriever.synthetic import SynthSpec, generate_synthetic_corpus


def make_poi(pid, city="Dublin", lat=53.35, long=-6.26, poi_type="restaurant",
             reviews=("Nice place.",), street="Main Street", entity=None, summary=None):
    return Poi(id=pid, name=PoiName(entity or f"Entity {pid}", street, city, "D01"),
               location=GeoPoint(lat, long), poi_type=poi_type, reviews=tuple(reviews),
               summary=summary)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(SynthSpec(n_cities=3, pois_per_city=12, questions_per_city=4),
                                     seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
