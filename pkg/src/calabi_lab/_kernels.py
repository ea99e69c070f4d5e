"""Hot inner loops, compiled with numba when available.

Every kernel has two implementations with identical signatures: a
``*_jit`` version (numba ``@njit``) and a ``*_numpy`` version that uses
only numpy/scipy. The public name points at one of them depending on the
``CALABI_LAB_NUMBA`` environment variable (``0`` disables JIT). Both paths
are exercised by the test suite and compared in ``benchmarks/``.
"""

import math
import os

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _sp_dijkstra

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CALABI_LAB_NUMBA", "1") != "0"

if HAVE_NUMBA:
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # avoid probing an outdated system TBB; workqueue is always available
        numba.config.THREADING_LAYER = "workqueue"
    _threads = os.environ.get("CALABI_LAB_THREADS")
    if _threads:
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


def backend():
    return "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# sqrt recurrence r_j = sqrt(r_{j-1}^2 + 1/j^2)


def _radius_recurrence_loop(r1, J):
    out = np.empty(J)
    out[0] = r1
    for j in range(2, J + 1):
        prev = out[j - 2]
        out[j - 1] = math.sqrt(prev * prev + 1.0 / (j * j))
    return out


def radius_recurrence_numpy(r1, J):
    # sequential by nature; plain Python loop keeps the exact operation order
    out = np.empty(J)
    out[0] = r1
    prev = float(r1)
    sqrt = math.sqrt
    for j in range(2, J + 1):
        prev = sqrt(prev * prev + 1.0 / (j * j))
        out[j - 1] = prev
    return out


# --------------------------------------------------------------------------
# primitive accumulation along a BFS spanning tree


def _tree_accumulate_loop(order, parent, incr, base_value):
    # incr[:, v] is the increment along the tree edge parent[v] -> v
    m, n = incr.shape
    out = np.empty((m, n), dtype=incr.dtype)
    root = order[0]
    for c in range(m):
        out[c, root] = base_value[c]
    for k in range(1, order.shape[0]):
        v = order[k]
        p = parent[v]
        for c in range(m):
            out[c, v] = out[c, p] + incr[c, v]
    return out


def tree_accumulate_numpy(order, parent, incr, base_value):
    m, n = incr.shape
    out = np.empty((m, n), dtype=incr.dtype)
    root = order[0]
    out[:, root] = base_value
    depth = np.zeros(n, dtype=np.int64)
    for v in order[1:]:
        depth[v] = depth[parent[v]] + 1
    ordered = order[1:]
    if ordered.size == 0:
        return out
    levels = depth[ordered]
    for d in range(1, int(levels.max()) + 1):
        vs = ordered[levels == d]
        out[:, vs] = out[:, parent[vs]] + incr[:, vs]
    return out


# --------------------------------------------------------------------------
# single-source Dijkstra on a CSR graph


def _dijkstra_loop(indptr, indices, weights, source):
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    # binary heap of (key, vertex); lazy deletion
    cap = indices.shape[0] + 1
    hkey = np.empty(cap)
    hval = np.empty(cap, dtype=np.int64)
    size = 0
    dist[source] = 0.0
    hkey[0] = 0.0
    hval[0] = source
    size = 1
    while size > 0:
        key = hkey[0]
        u = hval[0]
        size -= 1
        if size > 0:
            lk = hkey[size]
            lv = hval[size]
            i = 0
            while True:
                c = 2 * i + 1
                if c >= size:
                    break
                if c + 1 < size and hkey[c + 1] < hkey[c]:
                    c += 1
                if hkey[c] < lk:
                    hkey[i] = hkey[c]
                    hval[i] = hval[c]
                    i = c
                else:
                    break
            hkey[i] = lk
            hval[i] = lv
        if done[u] or key > dist[u]:
            continue
        done[u] = True
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            nd = key + weights[e]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                if size >= cap:
                    continue
                i = size
                size += 1
                while i > 0:
                    p = (i - 1) // 2
                    if hkey[p] > nd:
                        hkey[i] = hkey[p]
                        hval[i] = hval[p]
                        i = p
                    else:
                        break
                hkey[i] = nd
                hval[i] = v
    return dist, pred


def dijkstra_numpy(indptr, indices, weights, source):
    n = indptr.shape[0] - 1
    g = csr_matrix((weights, indices, indptr), shape=(n, n))
    dist, pred = _sp_dijkstra(g, directed=True, indices=int(source), return_predecessors=True)
    pred = pred.astype(np.int64)
    pred[pred < 0] = -1
    return dist, pred


# --------------------------------------------------------------------------
# pairwise overlap of closed axis-aligned rectangles


def _rect_overlap_count_loop(x0, x1, y0, y1):
    # sort-and-sweep along x; counts[i] = #{j: pair (i, j) overlaps, j after i in x order}
    n = x0.shape[0]
    order = np.argsort(x0, kind="mergesort")
    sx0 = x0[order]
    sx1 = x1[order]
    sy0 = y0[order]
    sy1 = y1[order]
    sorted_counts = np.zeros(n, dtype=np.int64)
    for a in prange(n):
        c = 0
        b = a + 1
        while b < n and sx0[b] <= sx1[a]:
            if sy0[a] <= sy1[b] and sy0[b] <= sy1[a]:
                c += 1
            b += 1
        sorted_counts[a] = c
    counts = np.zeros(n, dtype=np.int64)
    for a in range(n):
        counts[order[a]] = sorted_counts[a]
    return counts


def rect_overlap_count_numpy(x0, x1, y0, y1):
    # sort-and-sweep along x: only pairs overlapping in x are compared in y
    n = x0.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    order = np.argsort(x0, kind="stable")
    sx0, sx1, sy0, sy1 = x0[order], x1[order], y0[order], y1[order]
    stop = np.searchsorted(sx0, sx1, side="right")
    for a in range(n):
        b = stop[a]
        if b <= a + 1:
            continue
        sl = slice(a + 1, b)
        hit = (sy0[a] <= sy1[sl]) & (sy0[sl] <= sy1[a]) & (sx0[sl] <= sx1[a])
        counts[order[a]] += int(hit.sum())
    return counts


if HAVE_NUMBA:
    radius_recurrence_jit = njit(cache=True)(_radius_recurrence_loop)
    tree_accumulate_jit = njit(cache=True)(_tree_accumulate_loop)
    dijkstra_jit = njit(cache=True)(_dijkstra_loop)
    rect_overlap_count_jit = njit(cache=True, parallel=True)(_rect_overlap_count_loop)
else:  # pragma: no cover
    radius_recurrence_jit = radius_recurrence_numpy
    tree_accumulate_jit = tree_accumulate_numpy
    dijkstra_jit = dijkstra_numpy
    rect_overlap_count_jit = rect_overlap_count_numpy

if USE_NUMBA:
    radius_recurrence = radius_recurrence_jit
    tree_accumulate = tree_accumulate_jit
    dijkstra = dijkstra_jit
    rect_overlap_count = rect_overlap_count_jit
else:
    radius_recurrence = radius_recurrence_numpy
    tree_accumulate = tree_accumulate_numpy
    dijkstra = dijkstra_numpy
    rect_overlap_count = rect_overlap_count_numpy
