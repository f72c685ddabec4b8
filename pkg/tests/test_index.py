import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import tiny_model
from poiretriever.errors import BadMagicError, FormatError, ShapeError, TruncatedError, VersionMismatchError
from poiretriever.index import (CandidateFilter, EmbeddingIndex, build_index, index_bytes,
                                load_index, parse_index, save_index, score_all, search)


def random_index(rng, n, d=4):
    ids = [f"p{i:03d}" for i in rng.permutation(n)]
    # Rounded vectors so that exact score ties occur.
    vecs = rng.integers(-2, 3, size=(n, d)).astype(np.float32)
    cities = [str(c) for c in rng.choice(["a", "b", "c"], size=n)]
    types = [str(t) for t in rng.choice(["hotel", "restaurant"], size=n)]
    return EmbeddingIndex(ids, cities, types, vecs, "fp")


def brute_force(index, q, k, flt):
    scores = index.vectors.astype(np.float64) @ q
    rows = [i for i in range(len(index))
            if (flt.city is None or index.cities[i] == flt.city)
            and (flt.poi_type is None or index.types[i] == flt.poi_type)]
    rows.sort(key=lambda i: (-scores[i], index.ids[i]))
    return [index.ids[i] for i in rows[:k]]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_search_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    index = random_index(rng, n)
    q = rng.integers(-2, 3, size=4).astype(np.float64)
    for flt in (CandidateFilter(), CandidateFilter(city="a"), CandidateFilter("b", "hotel")):
        for k in (1, 3, n):
            assert [r.poi_id for r in search(index, q, k, flt)] == brute_force(index, q, k, flt)


def test_ranks_are_one_based_and_scores_descending(rng):
    index = random_index(rng, 30)
    res = search(index, rng.normal(size=4), 10)
    assert [r.rank for r in res] == list(range(1, 11))
    assert all(a.score >= b.score for a, b in zip(res, res[1:]))


def test_threads_do_not_change_bits(rng, monkeypatch):
    import poiretriever.index as idx
    monkeypatch.setattr(idx, "SCORE_CHUNK", 7)
    index = random_index(rng, 50, d=8)
    index.vectors[:] = rng.normal(size=(50, 8)).astype(np.float32)
    q = rng.normal(size=8)
    assert score_all(index, q, 1).tobytes() == score_all(index, q, 4).tobytes()


def test_query_dim_mismatch(rng):
    with pytest.raises(ShapeError):
        search(random_index(rng, 5), np.ones(3), 1)


class TestFileFormat:
    def test_round_trip(self, rng, tmp_path):
        index = random_index(rng, 12)
        data = save_index(index, tmp_path / "i.bin")
        again = load_index(tmp_path / "i.bin")
        assert again == index and index_bytes(again) == data

    def test_corruption(self, rng):
        data = index_bytes(random_index(rng, 6))
        with pytest.raises(BadMagicError):
            parse_index(b"NOTANIDX" + data[8:])
        with pytest.raises(VersionMismatchError):
            parse_index(b"LAMBIDX2" + data[8:])
        with pytest.raises(TruncatedError):
            parse_index(data[:40])
        with pytest.raises(TruncatedError):
            parse_index(data[:-1])
        with pytest.raises(FormatError):
            parse_index(data + b"x")

    def test_error_classes_distinct(self):
        assert len({BadMagicError, VersionMismatchError, TruncatedError}) == 3
        assert not issubclass(BadMagicError, TruncatedError)


class TestBuild:
    def test_rebuild_identical_and_fingerprint_tracks_model(self, small_corpus):
        pois, _ = small_corpus
        model = tiny_model(pois, seed=1)
        a = build_index(model, pois.pois[:20])
        assert len(a) == 20 and a.dim == 5
        assert index_bytes(a) == index_bytes(build_index(model, pois.pois[:20]))
        model.fusion.bias.values += 1e-3
        assert build_index(model, pois.pois[:20]).fingerprint != a.fingerprint
