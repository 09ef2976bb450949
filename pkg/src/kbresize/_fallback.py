"""Pure numpy versions of the compiled kernels.

Squared distances are accumulated one coordinate at a time, in the same
order as the compiled loops, so both backends produce identical floating
point values (numpy's pairwise ``sum`` would not).
"""

import numpy as np

_CHUNK_ELEMENTS = 1 << 22


def _sqdist_rows(x, y):
    """Squared distance from every row of ``x`` to the single vector ``y``."""
    s = np.zeros(x.shape[0])
    for k in range(x.shape[1]):
        t = x[:, k] - y[k]
        s += t * t
    return s


def _sqdist_block(x, kb):
    s = np.zeros((x.shape[0], kb.shape[0]))
    for k in range(x.shape[1]):
        t = x[:, k, None] - kb[None, :, k]
        s += t * t
    return s


def prim_mst(points, one_minus_sq, root):
    n = points.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    edge = np.zeros(n)
    order = np.empty(n, dtype=np.int64)
    best = np.full(n, np.inf)
    best_from = np.full(n, -1, dtype=np.int64)
    in_tree = np.zeros(n, dtype=bool)
    n_evals = 0

    cur = root
    in_tree[cur] = True
    order[0] = cur
    for step in range(1, n):
        free = np.flatnonzero(~in_tree)
        s = _sqdist_rows(points[free], points[cur])
        delta = 2.0 * s / (one_minus_sq[cur] * one_minus_sq[free])
        n_evals += free.size
        b = best[free]
        better = (delta < b) | ((delta == b) & (cur < best_from[free]))
        upd = free[better]
        best[upd] = delta[better]
        best_from[upd] = cur
        nxt = int(free[np.argmin(best[free])])
        in_tree[nxt] = True
        parent[nxt] = best_from[nxt]
        edge[nxt] = best[nxt]
        order[step] = nxt
        cur = nxt
    return parent, edge, order, n_evals


def nearest(x, kb):
    n, m = x.shape[0], kb.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    rows = max(1, _CHUNK_ELEMENTS // max(m, 1))
    for start in range(0, n, rows):
        d2 = _sqdist_block(x[start:start + rows], kb)
        a = np.argmin(d2, axis=1)
        idx[start:start + rows] = a
        dist[start:start + rows] = d2[np.arange(a.size), a]
    return idx, dist


def kmeanspp_indices(x, uniforms):
    n = x.shape[0]
    n_centers = uniforms.shape[0]
    chosen = np.empty(n_centers, dtype=np.int64)
    mind = np.full(n, np.inf)
    taken = np.zeros(n, dtype=bool)
    total = 0.0
    pick = min(int(uniforms[0] * n), n - 1)
    for c in range(n_centers):
        if c > 0:
            pick = -1
            if total > 0.0:
                target = uniforms[c] * total
                acc = np.cumsum(mind)
                hits = np.flatnonzero((acc > target) & (mind > 0.0))
                if hits.size:
                    pick = int(hits[0])
                else:
                    pick = int(np.flatnonzero(mind > 0.0)[-1])
            if pick < 0:
                pick = int(np.flatnonzero(~taken)[0])
        chosen[c] = pick
        taken[pick] = True
        np.minimum(mind, _sqdist_rows(x, x[pick]), out=mind)
        total = np.cumsum(mind)[-1]
    return chosen


def lloyd(x, centers, max_iter, tol):
    n, d = x.shape
    kc = centers.shape[0]
    it = 0
    while True:
        labels = nearest(x, centers)[0]
        counts = np.bincount(labels, minlength=kc)
        shift_terms = np.zeros(kc)
        nonempty = counts > 0
        for k in range(d):
            col = np.bincount(labels, weights=x[:, k], minlength=kc)
            new = np.where(nonempty, col / np.maximum(counts, 1), centers[:, k])
            t = new - centers[:, k]
            shift_terms += np.where(nonempty, t * t, 0.0)
            centers[:, k] = new
        shift = np.cumsum(shift_terms)[-1]
        it += 1
        if shift <= tol or it >= max_iter:
            return labels, it
