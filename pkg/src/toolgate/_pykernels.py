"""Pure-Python/numpy implementations of the inner loops in ``_ckernels.pyx``.

Tie-breaking and arithmetic order mirror the compiled module so both back ends
produce the same merge sequences and top-k orderings.
"""
import numpy as np


def topk_cosine(matrix, query, k, id_rank):
    n = matrix.shape[0]
    k = min(int(k), n)
    if k <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    # row-wise reduction: identical rows give bitwise identical scores
    scores = (matrix * query).sum(axis=1)
    order = np.lexsort((id_rank, -scores))[:k]
    return order.astype(np.int64), scores[order]


def average_linkage(dist, threshold):
    d = np.array(dist, dtype=np.float64, copy=True)
    n = d.shape[0]
    size = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    # search matrix: strict upper triangle of active pairs, +inf elsewhere
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    work = np.where(upper, d, np.inf)
    idx = np.arange(n)
    pairs, heights = [], []
    for _ in range(n - 1):
        flat = int(np.argmin(work))
        bi, bj = divmod(flat, n)
        best = work[bi, bj]
        if not np.isfinite(best) or best > threshold:
            break
        pairs.append((bi, bj))
        heights.append(float(best))
        ni, nj = float(size[bi]), float(size[bj])
        others = active.copy()
        others[[bi, bj]] = False
        new = (ni * d[bi] + nj * d[bj]) / (ni + nj)
        d[bi, others] = new[others]
        d[others, bi] = new[others]
        size[bi] += size[bj]
        active[bj] = False
        work[bj, :] = np.inf
        work[:, bj] = np.inf
        after = others & (idx > bi)
        before = others & (idx < bi)
        work[bi, after] = new[after]
        work[before, bi] = new[before]
    pairs_arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return pairs_arr, np.array(heights, dtype=np.float64)


def lcs_length(a, b):
    a = list(a)
    b = list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b):
            if x == y:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = prev[j + 1] if prev[j + 1] >= cur[j] else cur[j]
        prev = cur
    return prev[-1]
