"""The compiled kernels and their pure-Python twins must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poiretriever import _pykernels, kernels

ck = pytest.importorskip("poiretriever._ckernels")


def test_backend_reports_compiled():
    assert kernels.BACKEND == "cython"


@given(st.lists(st.text(max_size=12), max_size=30), st.integers(64, 5000),
       st.integers(0, 2**64 - 1))
def test_hash_buckets_match(tokens, n_buckets, seed):
    a = ck.hash_buckets(tokens, n_buckets, seed)
    b = _pykernels.hash_buckets(tokens, n_buckets, seed)
    np.testing.assert_array_equal(a, b)


def test_fnv_known_value():
    # Published FNV-1a 64 test vector for "a" with the standard offset basis.
    assert _pykernels.fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert ck.fnv1a64(b"a") == 0xAF63DC4C8601EC8C


@settings(max_examples=50)
@given(st.floats(-90, 90), st.floats(-180, 180),
       st.lists(st.tuples(st.floats(-90, 90), st.floats(-180, 180)), min_size=1, max_size=20))
def test_haversine_many_bitwise(lat, lon, pts):
    lats = np.array([p[0] for p in pts])
    lons = np.array([p[1] for p in pts])
    a = ck.haversine_many(lat, lon, lats, lons, 6371.0)
    b = _pykernels.haversine_many(lat, lon, lats, lons, 6371.0)
    assert a.tobytes() == b.tobytes()


@settings(max_examples=200)
@given(st.integers(0, 60), st.integers(0, 80), st.integers(0, 10_000))
def test_topk_matches(n, k, seed):
    rng = np.random.default_rng(seed)
    # Few distinct score values so ties are common.
    scores = rng.integers(-3, 4, size=n).astype(np.float64)
    keys = rng.permutation(n).astype(np.int64)
    mask = (rng.random(n) < 0.7).astype(np.uint8)
    a = ck.topk_indices(scores, keys, mask, k)
    b = _pykernels.topk_indices(scores, keys, mask, k)
    np.testing.assert_array_equal(a, b)


SCRIPT = """
import hashlib, sys
sys.path.insert(0, {tests!r})
from helpers import tiny_model
from poiretriever import kernels
from poiretriever.index import build_index, index_bytes
from poiretriever.synthetic import SynthSpec, generate_synthetic_corpus
pois, _ = generate_synthetic_corpus(SynthSpec(n_cities=2, pois_per_city=10), 2)
print(kernels.BACKEND, hashlib.sha256(index_bytes(build_index(tiny_model(pois), pois))).hexdigest())
"""


def test_fallback_selected_by_env_and_builds_identical_index():
    import os
    import subprocess
    import sys
    from pathlib import Path

    code = SCRIPT.format(tests=str(Path(__file__).parent))
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, POIRETRIEVER_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        outs[flag] = res.stdout.split()
    assert outs["0"][0] == "cython" and outs["1"][0] == "python"
    assert outs["0"][1] == outs["1"][1]
