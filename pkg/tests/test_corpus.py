import json

import numpy as np
import pytest

from conftest import make_poi
from poiretriever.corpus import (CorpusError, DigestLimits, PoiCollection, Question, kmeans,
                                 load_pois, load_questions, poi_text, save_pois, save_questions,
                                 select_reviews_cluster)
from poiretriever.synthetic import SynthSpec, generate_synthetic_corpus


def write_lines(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


POI_ROW = {"id": "a", "name": {"entity": "Bar", "street": "High St", "city": "Cork",
                               "postcode": "T12"},
           "lat": 51.9, "long": -8.47, "type": "restaurant", "reviews": ["Good."]}


class TestLoading:
    def test_round_trip(self, small_corpus, tmp_path):
        pois, questions = small_corpus
        save_pois(pois, tmp_path / "p.jsonl")
        save_questions(questions, tmp_path / "q.jsonl")
        again = load_pois(tmp_path / "p.jsonl")
        assert again == pois
        assert load_questions(tmp_path / "q.jsonl", again) == list(questions)

    def test_bad_latitude_names_line_and_field(self, tmp_path):
        write_lines(tmp_path / "p.jsonl", [POI_ROW, dict(POI_ROW, id="b", lat=95)])
        with pytest.raises(CorpusError, match="line 2") as exc:
            load_pois(tmp_path / "p.jsonl")
        assert exc.value.field == "lat"

    def test_duplicate_id(self, tmp_path):
        write_lines(tmp_path / "p.jsonl", [POI_ROW, POI_ROW])
        with pytest.raises(CorpusError, match="line 2.*duplicate"):
            load_pois(tmp_path / "p.jsonl")

    def test_unknown_type(self, tmp_path):
        write_lines(tmp_path / "p.jsonl", [dict(POI_ROW, type="museum")])
        with pytest.raises(CorpusError):
            load_pois(tmp_path / "p.jsonl")

    def test_missing_field(self, tmp_path):
        row = dict(POI_ROW)
        del row["long"]
        write_lines(tmp_path / "p.jsonl", [row])
        with pytest.raises(CorpusError) as exc:
            load_pois(tmp_path / "p.jsonl")
        assert exc.value.field == "long"

    def test_answer_must_exist(self, tmp_path):
        write_lines(tmp_path / "p.jsonl", [POI_ROW])
        write_lines(tmp_path / "q.jsonl", [{"id": "q", "text": "t", "city": "Cork", "answers": ["zz"]}])
        with pytest.raises(CorpusError, match="zz"):
            load_questions(tmp_path / "q.jsonl", load_pois(tmp_path / "p.jsonl"))

    def test_empty_answers_rejected(self, tmp_path):
        write_lines(tmp_path / "q.jsonl", [{"id": "q", "text": "t", "city": "Cork", "answers": []}])
        with pytest.raises(CorpusError, match="line 1"):
            load_questions(tmp_path / "q.jsonl")

    def test_collection_indexes(self, small_corpus):
        pois, _ = small_corpus
        for (city, kind), members in pois.by_city_type.items():
            assert all(p.city == city and p.poi_type == kind for p in members)
        with pytest.raises(ValueError):
            PoiCollection([pois.pois[0], pois.pois[0]])


class TestKmeans:
    def test_objective_non_increasing(self, rng):
        X = rng.normal(size=(60, 5))
        _, _, trace = kmeans(X, 4, seed=3)
        assert all(a >= b - 1e-9 for a, b in zip(trace, trace[1:]))

    def test_separated_blobs(self, rng):
        X = np.vstack([rng.normal(c, 0.05, size=(10, 2)) for c in (0.0, 5.0, 10.0)])
        labels, _, _ = kmeans(X, 3, seed=0)
        for block in range(3):
            assert len(set(labels[block * 10 : block * 10 + 10])) == 1
        assert len(set(labels)) == 3

    def test_deterministic(self, rng):
        X = rng.normal(size=(30, 3))
        a, b = kmeans(X, 5, seed=1), kmeans(X, 5, seed=1)
        assert (a[0] == b[0]).all() and a[2] == b[2]


class TestDigest:
    def test_few_sentences_returned_whole(self):
        poi = make_poi("p", reviews=("One. Two.", "Three."))
        assert select_reviews_cluster(poi).sentences == ("One.", "Two.", "Three.")

    def test_token_budget(self):
        reviews = tuple(f"Sentence number {i} has five words." for i in range(40))
        digest = select_reviews_cluster(make_poi("p", reviews=reviews), max_tokens=256)
        assert digest.token_count <= 256
        digest = select_reviews_cluster(make_poi("p", reviews=reviews), max_tokens=12)
        assert digest.token_count <= 12

    def test_selected_sentences_come_from_reviews(self):
        reviews = tuple(f"Topic {i % 4} remark {i}." for i in range(30))
        poi = make_poi("p", reviews=reviews)
        digest = select_reviews_cluster(poi, k_clusters=3, n_per_cluster=2)
        assert len(digest.sentences) == 6
        assert set(digest.sentences) <= set(reviews)

    def test_summary_fallback_and_empty(self):
        assert poi_text(make_poi("p", reviews=(), summary=("Quiet spot.",))).source == \
            "precomputed_summary"
        with pytest.raises(CorpusError, match="empty POI text"):
            poi_text(make_poi("p", reviews=()))
        with pytest.raises(CorpusError):
            poi_text(make_poi("p"), mode="summary")


class TestSynthetic:
    def test_byte_identical(self, tmp_path):
        spec = SynthSpec(n_cities=2, pois_per_city=6, questions_per_city=3)
        for name in ("a", "b"):
            pois, qs = generate_synthetic_corpus(spec, 5)
            save_pois(pois, tmp_path / f"{name}.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_answers_in_question_city(self, small_corpus):
        pois, questions = small_corpus
        for q in questions:
            assert q.answer_ids and all(pois[a].city == q.city for a in q.answer_ids)
