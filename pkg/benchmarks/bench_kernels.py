"""Time the compiled kernels against their pure-Python twins.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each kernel is fed identical
inputs under both backends, outputs are checked for equality, and the best-of-N wall time
is reported.
"""
import argparse
import timeit

import numpy as np

from poiretriever import _pykernels
from poiretriever.text import FeatureConfig, ngram_strings

try:
    from poiretriever import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None


def workloads(rng):
    words = ["quiet", "pub", "music", "near", "river", "cheap", "sushi", "view", "hotel", "garden"]
    text = " ".join(rng.choice(words, size=4000))
    grams = ngram_strings(text, FeatureConfig())
    lats = rng.uniform(-90, 90, 200_000)
    lons = rng.uniform(-180, 180, 200_000)
    n = 200_000
    scores = np.round(rng.normal(size=n), 2)
    keys = rng.permutation(n).astype(np.int64)
    mask = (rng.random(n) < 0.5).astype(np.uint8)
    return {
        "hash_buckets (%d n-grams)" % len(grams): lambda k: k.hash_buckets(grams, 4096, 0x5EED),
        "haversine_many (200k points)": lambda k: k.haversine_many(53.3, -6.2, lats, lons, 6371.0),
        "topk_indices (200k, k=100)": lambda k: k.topk_indices(scores, keys, mask, 100),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e .`")
        return 1
    rng = np.random.default_rng(42)
    print(f"{'kernel':34s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s}")
    for name, fn in workloads(rng).items():
        a, b = fn(_ckernels), fn(_pykernels)
        assert np.array_equal(a, b), f"{name}: backends disagree"
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        print(f"{name:34s} {tc:10.4f} {tp:10.4f} {tp / tc:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
