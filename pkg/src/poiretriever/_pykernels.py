"""Pure-Python reference versions of the compiled kernels in ``_ckernels.pyx``."""
import math

import numpy as np

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK = (1 << 64) - 1


def fnv1a64(data, seed=0):
    h = (FNV_OFFSET ^ seed) & _MASK
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


def hash_buckets(tokens, n_buckets, seed):
    return np.array(
        [fnv1a64(t.encode("utf-8"), seed) % n_buckets for t in tokens], dtype=np.int64
    )


def _hav(lat1, lon1, lat2, lon2, radius):
    rad = math.pi / 180.0
    p1 = lat1 * rad
    p2 = lat2 * rad
    dphi = (lat2 - lat1) * rad
    dlmb = (lon2 - lon1) * rad
    s1 = math.sin(dphi / 2.0)
    s2 = math.sin(dlmb / 2.0)
    h = s1 * s1 + math.cos(p1) * math.cos(p2) * s2 * s2
    if h > 1.0:
        h = 1.0
    return 2.0 * radius * math.asin(math.sqrt(h))


def haversine_many(lat, lon, lats, lons, radius):
    return np.array(
        [_hav(lat, lon, a, b, radius) for a, b in zip(lats.tolist(), lons.tolist())],
        dtype=np.float64,
    )


def topk_indices(scores, keys, mask, k):
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    cand = np.flatnonzero(mask)
    order = np.lexsort((keys[cand], -scores[cand]))
    return cand[order[:k]].astype(np.int64)
