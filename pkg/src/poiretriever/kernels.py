"""Kernel dispatch: the compiled extension when importable, else the pure-Python twins.

Set ``POIRETRIEVER_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("POIRETRIEVER_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

fnv1a64 = _impl.fnv1a64
hash_buckets = _impl.hash_buckets
haversine_many = _impl.haversine_many
topk_indices = _impl.topk_indices
