# cython: language_level=3
"""Compiled hot loops. Must stay bit-for-bit equivalent to ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, asin, sqrt, M_PI
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t FNV_OFFSET = 14695981039346656037ULL
cdef uint64_t FNV_PRIME = 1099511628211ULL


cdef inline uint64_t _fnv1a(const unsigned char* data, Py_ssize_t n, uint64_t seed) nogil:
    cdef uint64_t h = FNV_OFFSET ^ seed
    cdef Py_ssize_t i
    for i in range(n):
        h ^= data[i]
        h *= FNV_PRIME
    return h


def fnv1a64(bytes data, uint64_t seed=0):
    return _fnv1a(<const unsigned char*> data, len(data), seed)


def hash_buckets(list tokens, Py_ssize_t n_buckets, uint64_t seed):
    cdef Py_ssize_t n = len(tokens)
    cdef cnp.ndarray[int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i
    cdef bytes b
    for i in range(n):
        b = (<str> tokens[i]).encode("utf-8")
        out[i] = <int64_t> (_fnv1a(<const unsigned char*> b, len(b), seed) % <uint64_t> n_buckets)
    return out


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2, double radius) nogil:
    cdef double rad = M_PI / 180.0
    cdef double p1 = lat1 * rad
    cdef double p2 = lat2 * rad
    cdef double dphi = (lat2 - lat1) * rad
    cdef double dlmb = (lon2 - lon1) * rad
    cdef double s1 = sin(dphi / 2.0)
    cdef double s2 = sin(dlmb / 2.0)
    cdef double h = s1 * s1 + cos(p1) * cos(p2) * s2 * s2
    if h > 1.0:
        h = 1.0
    return 2.0 * radius * asin(sqrt(h))


def haversine_many(double lat, double lon, double[::1] lats, double[::1] lons, double radius):
    cdef Py_ssize_t n = lats.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ov[i] = _hav(lat, lon, lats[i], lons[i], radius)
    return out


cdef inline bint _worse(double sa, int64_t ka, double sb, int64_t kb) nogil:
    # True when (sa, ka) ranks strictly below (sb, kb): lower score, or equal score and larger key.
    if sa < sb:
        return True
    if sa > sb:
        return False
    return ka > kb


cdef void _sift_down(double* hs, int64_t* hk, int64_t* hi, Py_ssize_t size, Py_ssize_t pos) nogil:
    # Heap root holds the worst retained candidate.
    cdef Py_ssize_t child, worst
    cdef double ts
    cdef int64_t tk, ti
    while True:
        worst = pos
        child = 2 * pos + 1
        if child < size and _worse(hs[child], hk[child], hs[worst], hk[worst]):
            worst = child
        child += 1
        if child < size and _worse(hs[child], hk[child], hs[worst], hk[worst]):
            worst = child
        if worst == pos:
            return
        ts = hs[pos]; hs[pos] = hs[worst]; hs[worst] = ts
        tk = hk[pos]; hk[pos] = hk[worst]; hk[worst] = tk
        ti = hi[pos]; hi[pos] = hi[worst]; hi[worst] = ti
        pos = worst


cdef void _sift_up(double* hs, int64_t* hk, int64_t* hi, Py_ssize_t pos) nogil:
    cdef Py_ssize_t parent
    cdef double ts
    cdef int64_t tk, ti
    while pos > 0:
        parent = (pos - 1) // 2
        if not _worse(hs[pos], hk[pos], hs[parent], hk[parent]):
            return
        ts = hs[pos]; hs[pos] = hs[parent]; hs[parent] = ts
        tk = hk[pos]; hk[pos] = hk[parent]; hk[parent] = tk
        ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
        pos = parent


def topk_indices(double[::1] scores, int64_t[::1] keys, cnp.uint8_t[::1] mask, Py_ssize_t k):
    """Indices of the k best entries by (score desc, key asc) among mask != 0."""
    cdef Py_ssize_t n = scores.shape[0]
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] hs_arr = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[int64_t, ndim=1] hk_arr = np.empty(k, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] hi_arr = np.empty(k, dtype=np.int64)
    cdef double* hs = <double*> hs_arr.data
    cdef int64_t* hk = <int64_t*> hk_arr.data
    cdef int64_t* hi = <int64_t*> hi_arr.data
    cdef Py_ssize_t size = 0
    cdef Py_ssize_t i, j
    cdef double s, ts
    cdef int64_t tk, ti
    with nogil:
        for i in range(n):
            if mask[i] == 0:
                continue
            s = scores[i]
            if size < k:
                hs[size] = s
                hk[size] = keys[i]
                hi[size] = i
                _sift_up(hs, hk, hi, size)
                size += 1
            elif _worse(hs[0], hk[0], s, keys[i]):
                hs[0] = s
                hk[0] = keys[i]
                hi[0] = i
                _sift_down(hs, hk, hi, size, 0)
        # Heap-sort in place: repeatedly move the worst to the tail.
        j = size
        while j > 1:
            j -= 1
            ts = hs[0]; hs[0] = hs[j]; hs[j] = ts
            tk = hk[0]; hk[0] = hk[j]; hk[j] = tk
            ti = hi[0]; hi[0] = hi[j]; hi[j] = ti
            _sift_down(hs, hk, hi, j, 0)
    return hi_arr[:size].copy()
