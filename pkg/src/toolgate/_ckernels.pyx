# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_pykernels`` is the reference twin of this module."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef inline bint _better(double s1, long r1, double s2, long r2) noexcept nogil:
    # higher score first, then lower id rank
    return s1 > s2 or (s1 == s2 and r1 < r2)


def topk_cosine(const double[:, ::1] matrix, const double[::1] query, long k,
                const cnp.int64_t[::1] id_rank):
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t dim = matrix.shape[1]
    cdef Py_ssize_t i, j, pos
    cdef double s
    if k > n:
        k = n
    out_idx = np.empty(k, dtype=np.int64)
    out_score = np.empty(k, dtype=np.float64)
    cdef cnp.int64_t[::1] bi = out_idx
    cdef double[::1] bs = out_score
    cdef Py_ssize_t filled = 0
    if k <= 0:
        return out_idx, out_score
    with nogil:
        for i in range(n):
            s = 0.0
            for j in range(dim):
                s = s + matrix[i, j] * query[j]
            if filled == k and not _better(s, id_rank[i], bs[k - 1], id_rank[bi[k - 1]]):
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and _better(s, id_rank[i], bs[pos - 1], id_rank[bi[pos - 1]]):
                bs[pos] = bs[pos - 1]
                bi[pos] = bi[pos - 1]
                pos -= 1
            bs[pos] = s
            bi[pos] = i
            if filled < k:
                filled += 1
    return out_idx, out_score


def average_linkage(const double[:, ::1] dist, double threshold):
    """Merge sequence of average-linkage clustering on a square distance matrix.

    Returns ``(pairs, heights)``; each pair ``(a, b)`` has ``a < b`` and names
    clusters by their smallest member index.
    """
    cdef Py_ssize_t n = dist.shape[0]
    work = np.array(dist, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] d = work
    active_arr = np.ones(n, dtype=np.int64)
    size_arr = np.ones(n, dtype=np.int64)
    cdef cnp.int64_t[::1] active = active_arr
    cdef cnp.int64_t[::1] size = size_arr
    pairs_arr = np.empty((max(n - 1, 0), 2), dtype=np.int64)
    heights_arr = np.empty(max(n - 1, 0), dtype=np.float64)
    cdef cnp.int64_t[:, ::1] pairs = pairs_arr
    cdef double[::1] heights = heights_arr
    cdef Py_ssize_t m = 0, n_active = n, i, j, t, bi, bj
    cdef double best, v, ni, nj
    with nogil:
        while n_active > 1:
            best = INFINITY
            bi = -1
            bj = -1
            for i in range(n):
                if not active[i]:
                    continue
                for j in range(i + 1, n):
                    if active[j] and d[i, j] < best:
                        best = d[i, j]
                        bi = i
                        bj = j
            if bi < 0 or best > threshold:
                break
            pairs[m, 0] = bi
            pairs[m, 1] = bj
            heights[m] = best
            m += 1
            ni = <double>size[bi]
            nj = <double>size[bj]
            for t in range(n):
                if active[t] and t != bi and t != bj:
                    v = (ni * d[bi, t] + nj * d[bj, t]) / (ni + nj)
                    d[bi, t] = v
                    d[t, bi] = v
            size[bi] += size[bj]
            active[bj] = 0
            n_active -= 1
    return pairs_arr[:m].copy(), heights_arr[:m].copy()


def lcs_length(const cnp.int64_t[::1] a, const cnp.int64_t[::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i, j
    if na == 0 or nb == 0:
        return 0
    prev_arr = np.zeros(nb + 1, dtype=np.int64)
    cur_arr = np.zeros(nb + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    with nogil:
        for i in range(na):
            cur[0] = 0
            for j in range(nb):
                if a[i] == b[j]:
                    cur[j + 1] = prev[j] + 1
                elif prev[j + 1] >= cur[j]:
                    cur[j + 1] = prev[j + 1]
                else:
                    cur[j + 1] = cur[j]
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[nb])
