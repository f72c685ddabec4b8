"""Small shared builders for tests."""
import numpy as np

from poiretriever.encoders import BiEncoder, LocationVocab, ModelConfig
from poiretriever.text import FeatureConfig

TINY_FEATURES = FeatureConfig(n_buckets=64)


def tiny_model(pois, loc_kind="name", seed=0, **kw):
    cfg = ModelConfig(features=TINY_FEATURES, d1=4, d2=3, d=5, loc_kind=loc_kind,
                      loc_emb_dim=3, loc_hidden=4, geo_m=2, seed=seed, **kw)
    return BiEncoder(cfg, LocationVocab.build(list(pois)))


def desk_model(pois, loc_kind="name", seed=0):
    return BiEncoder(ModelConfig(loc_kind=loc_kind, seed=seed), LocationVocab.build(list(pois)))


def perturb(params, rng, scale=0.3):
    for p in params:
        p.values += rng.normal(0.0, scale, size=p.shape)
