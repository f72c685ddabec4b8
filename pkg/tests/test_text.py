import numpy as np
import pytest

from poiretriever import kernels
from poiretriever.text import FeatureConfig, analyze, hash_features, ngram_strings, segment_sentences


@pytest.mark.parametrize("text,expected", [
    ("Good pub. Nice food!", ["Good pub.", "Nice food!"]),
    ("", []),
    ("Hello", ["Hello"]),
    ("Really?  Yes.\nOk", ["Really?", "Yes.", "Ok"]),
    ("3.5 stars. Fine", ["3.5 stars.", "Fine"]),
])
def test_segment_sentences(text, expected):
    assert segment_sentences(text) == expected


def test_analyze_lowercases_and_splits():
    assert analyze("Pub-Crawl in DUBLIN, 2024!") == ["pub", "crawl", "in", "dublin", "2024"]


def test_hash_features_deterministic_and_normalized():
    a = hash_features("great pub in dublin")
    b = hash_features("great pub in dublin")
    assert a.tobytes() == b.tobytes()
    assert np.linalg.norm(a) == pytest.approx(1.0)


def test_empty_text_is_zero_vector():
    v = hash_features("")
    assert v.shape == (4096,) and not v.any()


def test_word_order_changes_bigrams_only():
    cfg = FeatureConfig()

    def buckets(prefix, text):
        grams = [g for g in ngram_strings(text, cfg) if g.startswith(prefix)]
        return sorted(kernels.hash_buckets(grams, cfg.n_buckets, cfg.seed).tolist())

    a, b = "pub dublin", "dublin pub"
    # Enumerated by hand: unigrams {pub, dublin}; bigrams "pub dublin" vs "dublin pub".
    assert [g for g in ngram_strings(a, cfg) if g.startswith("w2:")] == ["w2:pub dublin"]
    assert [g for g in ngram_strings(b, cfg) if g.startswith("w2:")] == ["w2:dublin pub"]
    assert buckets("w1:", a) == buckets("w1:", b)
    assert buckets("c3:", a) == buckets("c3:", b)
    assert buckets("w2:", a) != buckets("w2:", b)


def test_feature_config_rejects_small_bucket_count():
    with pytest.raises(ValueError):
        FeatureConfig(n_buckets=32)
