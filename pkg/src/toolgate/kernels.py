"""Hot inner loops with a compiled back end and a pure-Python fallback.

The compiled module is used when it imports; set ``TOOLGATE_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from toolgate import _pykernels as python_impl

try:
    from toolgate import _ckernels as compiled_impl
except ImportError:  # extension not built
    compiled_impl = None

if compiled_impl is not None and not os.environ.get("TOOLGATE_PURE_PYTHON"):
    _impl = compiled_impl
    BACKEND = "cython"
else:
    _impl = python_impl
    BACKEND = "python"


def topk_cosine(matrix, query, k, id_rank, impl=None):
    """Indices and scores of the ``k`` rows of ``matrix`` with the largest dot
    product against ``query``; equal scores ordered by ascending ``id_rank``."""
    impl = impl or _impl
    return impl.topk_cosine(
        np.ascontiguousarray(matrix, dtype=np.float64),
        np.ascontiguousarray(query, dtype=np.float64),
        int(k),
        np.ascontiguousarray(id_rank, dtype=np.int64),
    )


def average_linkage(dist, threshold, impl=None):
    """Average-linkage merge sequence over a symmetric distance matrix.

    Merges while the closest pair is at distance <= ``threshold``. Equal
    distances resolve to the lexicographically smallest ``(a, b)`` pair of
    cluster slots, where a cluster's slot is its smallest member index.
    """
    impl = impl or _impl
    return impl.average_linkage(np.ascontiguousarray(dist, dtype=np.float64), float(threshold))


def lcs_length(a, b, impl=None):
    impl = impl or _impl
    return int(impl.lcs_length(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)))
