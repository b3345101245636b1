"""Pure-Python DTW kernels, same algorithm and signatures as the compiled ones."""

import math

import numpy as np


def dtw_distance(a, b, window=-1):
    n, m = len(a), len(b)
    if m > n:
        a, b, n, m = b, a, m, n
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    w = n if window < 0 else window
    inf = math.inf
    prev = [inf] * (m + 1)
    cur = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        lo = max(1, i - w)
        hi = min(m, i + w)
        cur[lo - 1] = inf
        ai = a[i - 1]
        for j in range(lo, hi + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(ai - b[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


def dtw_matrix(queries, qlen, supports, slen, window=-1):
    out = np.empty((len(queries), len(supports)))
    for i, (q, nq) in enumerate(zip(queries, qlen)):
        for j, (s, ns) in enumerate(zip(supports, slen)):
            out[i, j] = dtw_distance(q[:nq], s[:ns], window)
    return out
