import numpy as np
import pytest

from conftest import make_poi
from helpers import tiny_model
from poiretriever.corpus import DigestLimits, poi_text
from poiretriever.encoders import (BiEncoder, LocationVocab, ModelConfig, cosine_sim01,
                                   encode_location, encode_poi, encode_question, inner_product,
                                   pad_locations, tokenize_location)
from poiretriever.errors import ConfigError, ShapeError
from poiretriever.geo import GeoPoint


class TestTokens:
    def test_markers_and_truncation(self, small_corpus):
        pois, _ = small_corpus
        vocab = LocationVocab.build(pois)
        ids = tokenize_location(pois.pois[0].name, vocab)
        assert ids[0] == 0  # entity marker first
        assert len(tokenize_location(pois.pois[0].name, vocab, max_tokens=3)) == 3

    def test_unknown_words_hash_into_oov(self, small_corpus):
        pois, _ = small_corpus
        vocab = LocationVocab.build(pois)
        w = vocab.word_id("zzzunseen")
        assert w == vocab.word_id("zzzunseen") and 0 <= w < vocab.size
        assert LocationVocab.from_dict(vocab.to_dict()).word_id("zzzunseen") == w


class TestPadding:
    def test_two_tags(self):
        v = pad_locations([GeoPoint(1, 2), GeoPoint(3, 4)], 5)
        assert v.tolist() == [1, 2, 3, 4] + [0] * 6

    def test_subset_seeded(self):
        tags = [GeoPoint(i, i) for i in range(7)]
        a = pad_locations(tags, 5, seed=3)
        assert a.tolist() == pad_locations(tags, 5, seed=3).tolist()
        assert np.count_nonzero(a.reshape(5, 2).any(axis=1)) >= 4 and a.size == 10

    def test_empty(self):
        assert not pad_locations([], 5).any()


class TestBiEncoder:
    @pytest.mark.parametrize("kind", ["name", "none", "coords"])
    def test_shapes(self, small_corpus, kind):
        pois, qs = small_corpus
        model = tiny_model(pois, loc_kind=kind)
        pv, _ = model.encode_pois(model.poi_inputs(pois.pois[:4]))
        qv, _ = model.encode_questions(model.question_inputs(qs[:3]))
        assert pv.shape == (4, 5) and qv.shape == (3, 5)

    def test_single_item_matches_batch(self, small_corpus):
        pois, qs = small_corpus
        model = tiny_model(pois, seed=2)
        pv, _ = model.encode_pois(model.poi_inputs(pois.pois[:3]))
        one = encode_poi(model, pois.pois[1], poi_text(pois.pois[1]))
        np.testing.assert_allclose(one, pv[1], rtol=1e-12, atol=1e-14)
        qv, _ = model.encode_questions(model.question_inputs(qs[:2]))
        np.testing.assert_allclose(encode_question(model, qs[1]), qv[1], rtol=1e-12, atol=1e-14)

    def test_location_ignores_reviews(self, small_corpus):
        pois, _ = small_corpus
        model = tiny_model(pois)
        a = make_poi("x", reviews=("Lovely.",))
        b = make_poi("x", reviews=("Terrible and loud.",))
        assert (encode_location(model, a.name) == encode_location(model, b.name)).all()

    def test_checkpoint_round_trip(self, small_corpus, tmp_path):
        pois, _ = small_corpus
        model = tiny_model(pois, seed=5)
        data = model.save(tmp_path / "m.bin")
        again = BiEncoder.load(tmp_path / "m.bin")
        assert again.to_bytes() == data
        assert again.fingerprint() == model.fingerprint()

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            ModelConfig(loc_kind="gps")


class TestSimilarity:
    def test_cosine_range_and_identity(self, rng):
        v = rng.normal(size=8)
        assert cosine_sim01(v, v) == pytest.approx(1.0)
        assert cosine_sim01(v, -v) == pytest.approx(0.0)
        with pytest.raises(ValueError):
            cosine_sim01(v, np.zeros(8))

    def test_inner_product(self):
        assert inner_product([1, 2], [3, 4]) == 11.0
        with pytest.raises(ShapeError):
            inner_product([1, 2], [1, 2, 3])
