# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a numpy twin in ``_fallback`` with the same
signature; ``_backend`` picks one at import time.  All loops run without
the GIL and without fast-math so results are reproducible run to run.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


cdef inline double _sq(const double* a, const double* b, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0, t
    cdef Py_ssize_t k
    for k in range(d):
        t = a[k] - b[k]
        s = s + t * t
    return s


def prim_mst(const double[:, ::1] points, const double[::1] one_minus_sq, Py_ssize_t root):
    """Dense Prim over the complete graph weighted by the Poincare ``delta``.

    ``delta = 2 |p - q|^2 / ((1 - |p|^2)(1 - |q|^2))`` is a monotone
    function of hyperbolic distance, so the tree is the hyperbolic MST.

    Returns ``(parent, delta, order, n_evals)``; ``parent[root] == -1``.
    """
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1]
    cdef Py_ssize_t step, j, k, cur, nxt
    cdef double s, t, delta, nbest
    cdef long long n_evals = 0

    parent_arr = np.full(n, -1, dtype=np.int64)
    delta_arr = np.zeros(n, dtype=np.float64)
    order_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] parent = parent_arr
    cdef double[::1] edge = delta_arr
    cdef long long[::1] order = order_arr
    cdef double[::1] best = np.full(n, INFINITY)
    cdef long long[::1] best_from = np.full(n, -1, dtype=np.int64)
    cdef unsigned char[::1] in_tree = np.zeros(n, dtype=np.uint8)

    with nogil:
        cur = root
        in_tree[cur] = 1
        order[0] = cur
        for step in range(1, n):
            nxt = -1
            nbest = INFINITY
            for j in range(n):
                if in_tree[j]:
                    continue
                s = _sq(&points[cur, 0], &points[j, 0], d)
                delta = 2.0 * s / (one_minus_sq[cur] * one_minus_sq[j])
                n_evals += 1
                if delta < best[j] or (delta == best[j] and cur < best_from[j]):
                    best[j] = delta
                    best_from[j] = cur
                if best[j] < nbest:
                    nbest = best[j]
                    nxt = j
            in_tree[nxt] = 1
            parent[nxt] = best_from[nxt]
            edge[nxt] = best[nxt]
            order[step] = nxt
            cur = nxt
    return parent_arr, delta_arr, order_arr, n_evals


def nearest(const double[:, ::1] x, const double[:, ::1] kb):
    """Exact nearest codebook row for every row of ``x``; ties go to the lower index."""
    cdef Py_ssize_t n = x.shape[0], m = kb.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k, arg
    cdef double s, t, best

    idx_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] idx = idx_arr
    cdef double[::1] dist = dist_arr

    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for j in range(m):
                s = _sq(&x[i, 0], &kb[j, 0], d)
                if s < best:
                    best = s
                    arg = j
            idx[i] = arg
            dist[i] = best
    return idx_arr, dist_arr


def kmeanspp_indices(const double[:, ::1] x, const double[::1] uniforms):
    """k-means++ seeding driven by pre-drawn uniforms (one per center).

    The first center is ``floor(u[0] * n)``; each later one is drawn with
    probability proportional to the squared distance to the nearest chosen
    center.  When every remaining weight is zero the lowest unchosen index
    is taken.
    """
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], n_centers = uniforms.shape[0]
    cdef Py_ssize_t c, i, k, pick
    cdef double s, t, target, acc
    cdef double total = 0.0

    chosen_arr = np.empty(n_centers, dtype=np.int64)
    cdef long long[::1] chosen = chosen_arr
    cdef double[::1] mind = np.full(n, INFINITY)
    cdef unsigned char[::1] taken = np.zeros(n, dtype=np.uint8)

    with nogil:
        pick = <Py_ssize_t>(uniforms[0] * n)
        if pick >= n:
            pick = n - 1
        for c in range(n_centers):
            if c > 0:
                target = uniforms[c] * total
                acc = 0.0
                pick = -1
                if total > 0.0:
                    for i in range(n):
                        acc = acc + mind[i]
                        if acc > target and mind[i] > 0.0:
                            pick = i
                            break
                    if pick < 0:
                        # rounding left target at the top of the range
                        for i in range(n - 1, -1, -1):
                            if mind[i] > 0.0:
                                pick = i
                                break
                if pick < 0:
                    for i in range(n):
                        if not taken[i]:
                            pick = i
                            break
            chosen[c] = pick
            taken[pick] = 1
            total = 0.0
            for i in range(n):
                s = _sq(&x[i, 0], &x[pick, 0], d)
                if s < mind[i]:
                    mind[i] = s
                total = total + mind[i]
    return chosen_arr


# Relative slack on bound comparisons so floating-point rounding in the
# bounds can never skip a point whose exact assignment would change.
cdef double _SLACK = 1e-10


cdef void _group_centers(const double[:, ::1] centers, long long[::1] group_of,
                         double[:, ::1] gcv, double[:, ::1] gsv, long long[::1] gnv) noexcept nogil:
    """Partition centers into ``gcv.shape[0]`` groups with a few plain Lloyd steps."""
    cdef Py_ssize_t kc = centers.shape[0], d = centers.shape[1], n_groups = gcv.shape[0]
    cdef Py_ssize_t it, j, g, k, arg
    cdef double s, best
    for g in range(n_groups):
        j = (g * kc) // n_groups
        for k in range(d):
            gcv[g, k] = centers[j, k]
    for it in range(5):
        for j in range(kc):
            best = INFINITY
            arg = 0
            for g in range(n_groups):
                s = _sq(&centers[j, 0], &gcv[g, 0], d)
                if s < best:
                    best = s
                    arg = g
            group_of[j] = arg
        for g in range(n_groups):
            gnv[g] = 0
            for k in range(d):
                gsv[g, k] = 0.0
        for j in range(kc):
            g = group_of[j]
            gnv[g] += 1
            for k in range(d):
                gsv[g, k] += centers[j, k]
        for g in range(n_groups):
            if gnv[g] > 0:
                for k in range(d):
                    gcv[g, k] = gsv[g, k] / gnv[g]


cdef inline Py_ssize_t _scan_group(const double* xi, const double* c, Py_ssize_t d,
                                   const long long* members, Py_ssize_t lo, Py_ssize_t hi,
                                   double* best, Py_ssize_t b1,
                                   double* m1, double* m2, long long* idx1) noexcept nogil:
    """Distances from ``xi`` to one group of centers.

    Updates the running overall best (ties to the lower index) and returns
    its index; writes the group's smallest and second-smallest squared
    distances and the index of the smallest.
    """
    cdef Py_ssize_t jj, j
    cdef double s, bst = best[0], a1 = INFINITY, a2 = INFINITY
    cdef long long i1 = -1
    for jj in range(lo, hi):
        j = members[jj]
        s = _sq(xi, c + j * d, d)
        if s < a1:
            a2 = a1
            a1 = s
            i1 = j
        elif s < a2:
            a2 = s
        if s < bst or (s == bst and j < b1):
            bst = s
            b1 = j
    best[0] = bst
    m1[0] = a1
    m2[0] = a2
    idx1[0] = i1
    return b1


def lloyd(const double[:, ::1] x, double[:, ::1] centers, Py_ssize_t max_iter, double tol,
          Py_ssize_t n_groups=0):
    """Lloyd iterations accelerated with per-group lower bounds (Yinyang k-means).

    Centers are split into groups; each point keeps an upper
    bound on the distance to its center and a lower bound per group, and
    only rescans groups whose bound it cannot rule out.  Assignments match
    plain Lloyd: ties resolve to the lower center index.

    ``centers`` is updated in place.  Stops when the summed squared center
    shift is ``<= tol`` or after ``max_iter`` iterations.  Empty clusters keep
    their previous center.  ``n_groups <= 0`` picks ``K / 32`` groups, at
    most 64 (per-group bookkeeping outweighs pruning beyond that).  Returns ``(labels, n_iter)``.
    """
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], kc = centers.shape[0]
    cdef Py_ssize_t i, j, k, g, a, b1, it, jj, idx1
    cdef double s, best, shift, dd, u, glb, m1, m2

    if n_groups <= 0:
        n_groups = max(1, min(kc // 32, 64))
    n_groups = min(n_groups, kc)
    labels_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] upper = np.empty(n)
    cdef double[:, ::1] lower = np.empty((n, n_groups))
    cdef double[::1] moved = np.empty(kc)
    cdef double[::1] gdrift = np.empty(n_groups)
    cdef double[:, ::1] sums = np.empty((kc, d))
    cdef long long[::1] counts = np.empty(kc, dtype=np.int64)
    cdef long long[::1] group_of = np.zeros(kc, dtype=np.int64)
    cdef long long[::1] gptr = np.zeros(n_groups + 1, dtype=np.int64)
    cdef long long[::1] members = np.empty(kc, dtype=np.int64)
    cdef long long[::1] fill = np.zeros(n_groups, dtype=np.int64)
    cdef double[::1] gmin1 = np.empty(n_groups)
    cdef double[::1] gmin2 = np.empty(n_groups)
    cdef long long[::1] gidx1 = np.empty(n_groups, dtype=np.int64)
    cdef unsigned char[::1] scanned = np.zeros(n_groups, dtype=np.uint8)
    cdef double[:, ::1] gcenters = np.empty((n_groups, d))
    cdef double[:, ::1] gsums = np.empty((n_groups, d))
    cdef long long[::1] gcounts = np.empty(n_groups, dtype=np.int64)

    with nogil:
        if n_groups > 1:
            _group_centers(centers, group_of, gcenters, gsums, gcounts)
        for j in range(kc):
            gptr[group_of[j] + 1] += 1
        for g in range(n_groups):
            gptr[g + 1] += gptr[g]
        for j in range(kc):
            g = group_of[j]
            members[gptr[g] + fill[g]] = j
            fill[g] += 1

        # initial exact assignment and bounds
        for i in range(n):
            best = INFINITY
            b1 = 0
            for g in range(n_groups):
                b1 = _scan_group(&x[i, 0], &centers[0, 0], d, &members[0], gptr[g], gptr[g + 1], &best, b1,
                                 &gmin1[g], &gmin2[g], &gidx1[g])
            labels[i] = b1
            upper[i] = sqrt(best)
            for g in range(n_groups):
                lower[i, g] = sqrt(gmin2[g] if gidx1[g] == b1 else gmin1[g])

        it = 0
        while True:
            for j in range(kc):
                counts[j] = 0
                for k in range(d):
                    sums[j, k] = 0.0
            for i in range(n):
                a = labels[i]
                counts[a] += 1
                for k in range(d):
                    sums[a, k] += x[i, k]
            shift = 0.0
            for j in range(kc):
                s = 0.0
                if counts[j] > 0:
                    for k in range(d):
                        dd = sums[j, k] / counts[j]
                        s = s + (dd - centers[j, k]) * (dd - centers[j, k])
                        centers[j, k] = dd
                moved[j] = sqrt(s)
                shift = shift + s
            it += 1
            if shift <= tol or it >= max_iter:
                break

            for g in range(n_groups):
                gdrift[g] = 0.0
                for jj in range(gptr[g], gptr[g + 1]):
                    if moved[members[jj]] > gdrift[g]:
                        gdrift[g] = moved[members[jj]]

            for i in range(n):
                a = labels[i]
                upper[i] += moved[a]
                glb = INFINITY
                for g in range(n_groups):
                    lower[i, g] -= gdrift[g]
                    if lower[i, g] < glb:
                        glb = lower[i, g]
                if upper[i] * (1.0 + _SLACK) < glb * (1.0 - _SLACK):
                    continue
                u = sqrt(_sq(&x[i, 0], &centers[a, 0], d))
                upper[i] = u
                if u * (1.0 + _SLACK) < glb * (1.0 - _SLACK):
                    continue

                best = _sq(&x[i, 0], &centers[a, 0], d)
                b1 = a
                for g in range(n_groups):
                    if u * (1.0 + _SLACK) < lower[i, g] * (1.0 - _SLACK):
                        scanned[g] = 0
                        continue
                    scanned[g] = 1
                    b1 = _scan_group(&x[i, 0], &centers[0, 0], d, &members[0], gptr[g], gptr[g + 1], &best, b1,
                                     &gmin1[g], &gmin2[g], &gidx1[g])
                for g in range(n_groups):
                    if scanned[g]:
                        # members tied with the group minimum land in m2
                        lower[i, g] = sqrt(gmin2[g] if gidx1[g] == b1 else gmin1[g])
                if b1 != a:
                    g = group_of[a]
                    if not scanned[g] and u < lower[i, g]:
                        lower[i, g] = u
                labels[i] = b1
                upper[i] = sqrt(best)
    return labels_arr, it
