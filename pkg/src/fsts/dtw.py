"""Dynamic time warping distance with an optional Sakoe-Chiba band.

The O(n*m) recurrence runs in the compiled ``_dtw_ext`` module when it is
importable and in ``_dtw_py`` otherwise.  Set ``FSTS_PURE_PYTHON=1`` to force
the fallback.  ``BACKEND`` reports which one is active.
"""

import os

import numpy as np

from . import _dtw_py

if os.environ.get("FSTS_PURE_PYTHON"):
    _impl = _dtw_py
else:
    try:
        from . import _dtw_ext as _impl
    except ImportError:
        _impl = _dtw_py

BACKEND = "cython" if _impl is not _dtw_py else "python"
BACKENDS = {"python": _dtw_py}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl


class WindowError(ValueError):
    """The band is too narrow to connect (0, 0) with (n - 1, m - 1)."""


def _check(n, m, window):
    if n == 0 or m == 0:
        raise ValueError("dtw requires non-empty series")
    if window is None:
        return -1
    window = int(window)
    if window < 0:
        raise WindowError(f"window must be non-negative, got {window}")
    if window < abs(n - m):
        raise WindowError(f"window {window} cannot align lengths {n} and {m}")
    return window


def dtw_distance(a, b, window=None, backend=None) -> float:
    """Cumulative L1 cost of the best monotone alignment of ``a`` and ``b``.

    Steps are (i-1, j), (i, j-1) and (i-1, j-1).  With ``window`` set, cells
    with ``|i - j| > window`` are excluded.
    """
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1)
    w = _check(len(a), len(b), window)
    impl = BACKENDS[backend] if backend else _impl
    return float(impl.dtw_distance(a, b, w))


def dtw_matrix(queries, query_lengths, supports, support_lengths, window=None, backend=None):
    """All query-by-support DTW distances over the unpadded prefixes of two row stacks."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    supports = np.ascontiguousarray(supports, dtype=np.float64)
    qlen = np.ascontiguousarray(query_lengths, dtype=np.int64)
    slen = np.ascontiguousarray(support_lengths, dtype=np.int64)
    if queries.ndim != 2 or supports.ndim != 2:
        raise ValueError("queries and supports must be 2-D row stacks")
    if len(qlen) != len(queries) or len(slen) != len(supports):
        raise ValueError("one length per row is required")
    if (qlen > queries.shape[1]).any() or (slen > supports.shape[1]).any():
        raise ValueError("a recorded length exceeds its row width")
    w = -1
    if len(qlen) and len(slen):
        for n in (qlen.min(), qlen.max()):
            for m in (slen.min(), slen.max()):
                w = _check(int(n), int(m), window)
    impl = BACKENDS[backend] if backend else _impl
    return impl.dtw_matrix(queries, qlen, supports, slen, w)
