"""Compiled inner loops.

Everything here works on plain float64 arrays and is shared by the public
wrappers in :mod:`surfao.robust`, :mod:`surfao.projection` and
:mod:`surfao.functional`, so that the per-pixel batch path and the
single-point path run literally the same arithmetic.

Medcouple kernel convention: with ``z = x - median``, a pair (zi <= 0 <= zj)
scores ``(zj + zi) / (zj - zi)``.  Ties at the median use the sign rule on
the within-tie ranks (see :func:`_mc_h`).
"""

import numpy as np
from numba import njit, prange

_DEGENERACY_RTOL = 1e-12


@njit(cache=True)
def _quantile_sorted(xs, q):
    # 1-based position h = (n - 1) q + 1 -> 0-based pos = (n - 1) q
    n = xs.shape[0]
    pos = (n - 1) * q
    lo = int(np.floor(pos))
    frac = pos - lo
    if frac == 0.0 or lo + 1 >= n:
        return xs[lo]
    return xs[lo] + frac * (xs[lo + 1] - xs[lo])


@njit(cache=True)
def _median_sorted(xs):
    n = xs.shape[0]
    half = n // 2
    if n % 2 == 1:
        return xs[half]
    return 0.5 * (xs[half - 1] + xs[half])


@njit(cache=True)
def _split_centered(xs, med):
    """Centered upper half (>= 0) and lower half (<= 0), both decreasing."""
    n = xs.shape[0]
    n_lo = 0
    while n_lo < n and xs[n_lo] <= med:
        n_lo += 1
    start_hi = n
    while start_hi > 0 and xs[start_hi - 1] >= med:
        start_hi -= 1
    q = n_lo
    p = n - start_hi
    zplus = np.empty(p)
    for i in range(p):
        zplus[i] = xs[n - 1 - i] - med
    zminus = np.empty(q)
    for j in range(q):
        zminus[j] = xs[n_lo - 1 - j] - med
    return zplus, zminus


@njit(cache=True)
def _mc_h(zplus, zminus, i, j):
    a = zplus[i]
    b = zminus[j]
    if a == b:
        # both at the median; ranks counted so the kernel matrix stays
        # non-increasing along rows and columns
        s = zplus.shape[0] - 1 - i - j
        if s > 0:
            return 1.0
        if s < 0:
            return -1.0
        return 0.0
    return (a + b) / (a - b)


@njit(cache=True)
def _medcouple_naive_sorted(xs):
    med = _median_sorted(xs)
    zplus, zminus = _split_centered(xs, med)
    p = zplus.shape[0]
    q = zminus.shape[0]
    vals = np.empty(p * q)
    t = 0
    for i in range(p):
        for j in range(q):
            vals[t] = _mc_h(zplus, zminus, i, j)
            t += 1
    total = p * q
    k = total // 2
    part = np.partition(vals, k)
    hi = part[k]
    if total % 2 == 1:
        return hi
    lo = part[0]
    for t in range(1, k):
        if part[t] > lo:
            lo = part[t]
    return 0.5 * (lo + hi)


@njit(cache=True)
def _weighted_median(vals, wts, m, idx):
    """Weighted median of vals[:m] by three-way quickselect over ``idx``."""
    total = 0.0
    for t in range(m):
        total += wts[t]
        idx[t] = t
    target = 0.5 * total
    lo = 0
    hi = m - 1
    acc = 0.0
    while True:
        if lo == hi:
            return vals[idx[lo]]
        piv = vals[idx[(lo + hi) // 2]]
        i = lo
        lt = lo
        gt = hi
        while i <= gt:
            v = vals[idx[i]]
            if v < piv:
                idx[lt], idx[i] = idx[i], idx[lt]
                lt += 1
                i += 1
            elif v > piv:
                idx[gt], idx[i] = idx[i], idx[gt]
                gt -= 1
            else:
                i += 1
        w_less = 0.0
        for t in range(lo, lt):
            w_less += wts[idx[t]]
        w_eq = 0.0
        for t in range(lt, gt + 1):
            w_eq += wts[idx[t]]
        if acc + w_less >= target:
            hi = lt - 1
        elif acc + w_less + w_eq >= target:
            return piv
        else:
            acc += w_less + w_eq
            lo = gt + 1


@njit(cache=True)
def _mc_search(xs, zplus, zminus, q1, q3, early):
    """Medcouple by a Johnson-Mizoguchi style selection over the kernel matrix.

    The matrix is non-increasing along both axes, so counts of elements
    above a pivot come from a staircase walk and the median is found without
    materialising it.  Returns ``(mc, a, b)``.  With ``early`` set the walk
    also tracks a bracket on the medcouple and stops once the fence computed
    at both bracket ends selects the same whisker indices ``a`` and ``b``;
    ``mc`` is NaN in that case.  Otherwise ``a = b = -1``.
    """
    p = zplus.shape[0]
    q = zminus.shape[0]
    total = p * q
    even = total % 2 == 0
    r2 = total // 2
    r1 = r2 - 1 if even else r2
    lb1 = -1.0
    ub1 = 1.0
    lb2 = -1.0
    ub2 = 1.0
    left = np.zeros(p, dtype=np.int64)
    right = np.full(p, q - 1, dtype=np.int64)
    ptmp = np.empty(p, dtype=np.int64)
    qtmp = np.empty(p, dtype=np.int64)
    meds = np.empty(p)
    wts = np.empty(p)
    idx = np.empty(p, dtype=np.int64)
    left_total = 0
    right_total = total
    while right_total - left_total > p:
        m = 0
        for i in range(p):
            if left[i] <= right[i]:
                meds[m] = _mc_h(zplus, zminus, i, (left[i] + right[i]) // 2)
                wts[m] = right[i] - left[i] + 1
                m += 1
        wm = _weighted_median(meds, wts, m, idx)

        # ptmp[i]: last column with h > wm; qtmp[i]: first column with h < wm
        j = 0
        n_greater = p
        n_geq = 0
        for i in range(p - 1, -1, -1):
            while j < q and _mc_h(zplus, zminus, i, j) > wm:
                j += 1
            ptmp[i] = j - 1
            jj = j
            while jj < q and _mc_h(zplus, zminus, i, jj) == wm:
                jj += 1
            qtmp[i] = jj
            n_greater += j - 1
            n_geq += jj

        if r1 <= n_greater - 1:
            right[:] = ptmp
            right_total = n_greater
        elif r1 > n_geq - 1:
            left[:] = qtmp
            left_total = n_geq
        else:
            v1 = wm
            if not even:
                return v1, -1, -1
            if r2 <= n_geq - 1:
                return v1, -1, -1
            v2 = -np.inf
            for i in range(p):
                if qtmp[i] < q:
                    v = _mc_h(zplus, zminus, i, qtmp[i])
                    if v > v2:
                        v2 = v
            return 0.5 * (v2 + v1), -1, -1

        if early:
            if r1 <= n_greater - 1:
                lb1 = max(lb1, wm)
            else:
                ub1 = min(ub1, wm)
            if r2 <= n_greater - 1:
                lb2 = max(lb2, wm)
            elif r2 >= n_geq:
                ub2 = min(ub2, wm)
            if even:
                mc_lo = 0.5 * (lb2 + max(lb1, lb2))
                mc_hi = 0.5 * (min(ub1, ub2) + ub1)
            else:
                mc_lo = lb1
                mc_hi = ub1
            flo, fhi = _fence_from_mc(q1, q3, mc_lo)
            a_lo, b_lo = _whisker_indices(xs, flo, fhi)
            flo, fhi = _fence_from_mc(q1, q3, mc_hi)
            a_hi, b_hi = _whisker_indices(xs, flo, fhi)
            if a_lo == a_hi and b_lo == b_hi:
                return np.nan, a_lo, b_lo

    cnt = right_total - left_total
    rest = np.empty(cnt)
    t = 0
    for i in range(p):
        for j in range(left[i], right[i] + 1):
            rest[t] = _mc_h(zplus, zminus, i, j)
            t += 1
    rest.sort()
    r = r1 - left_total
    v1 = rest[cnt - 1 - r]
    if not even:
        return v1, -1, -1
    if r + 1 < cnt:
        v2 = rest[cnt - 2 - r]
    else:
        v2 = -np.inf
        for i in range(p):
            j = right[i] + 1
            if j < q:
                v = _mc_h(zplus, zminus, i, j)
                if v > v2:
                    v2 = v
    return 0.5 * (v2 + v1), -1, -1


@njit(cache=True)
def _medcouple_fast_sorted(xs):
    med = _median_sorted(xs)
    zplus, zminus = _split_centered(xs, med)
    return _mc_search(xs, zplus, zminus, 0.0, 0.0, False)[0]


# Below this size the quadratic kernel with a partition is quicker.
_FAST_MC_MIN_N = 32


@njit(cache=True)
def _medcouple_sorted(xs):
    if xs.shape[0] >= _FAST_MC_MIN_N:
        return _medcouple_fast_sorted(xs)
    return _medcouple_naive_sorted(xs)


@njit(cache=True)
def _fence_from_mc(q1, q3, mc):
    iqr = q3 - q1
    if mc >= 0:
        lo = q1 - 1.5 * np.exp(-4.0 * mc) * iqr
        hi = q3 + 1.5 * np.exp(3.0 * mc) * iqr
    else:
        lo = q1 - 1.5 * np.exp(-3.0 * mc) * iqr
        hi = q3 + 1.5 * np.exp(4.0 * mc) * iqr
    return lo, hi


@njit(cache=True)
def _whisker_indices(xs, lo, hi):
    # xs ascending; smallest index with xs >= lo, largest with xs <= hi
    a = 0
    while xs[a] < lo:
        a += 1
    b = xs.shape[0] - 1
    while xs[b] > hi:
        b -= 1
    return a, b


@njit(cache=True)
def _fence_sorted(xs):
    """(q1, q3, mc, fence_lo, fence_hi, w1, w2, med) of an ascending sample."""
    q1 = _quantile_sorted(xs, 0.25)
    q3 = _quantile_sorted(xs, 0.75)
    med = _median_sorted(xs)
    mc = _medcouple_sorted(xs)
    lo, hi = _fence_from_mc(q1, q3, mc)
    a, b = _whisker_indices(xs, lo, hi)
    return q1, q3, mc, lo, hi, xs[a], xs[b], med


@njit(cache=True)
def _whiskers_sorted(xs):
    """(med, w1, w2) of an ascending sample, identical to :func:`_fence_sorted`.

    The fence is monotone in the medcouple, so the selection can stop as soon
    as the medcouple bracket no longer moves either whisker.
    """
    med = _median_sorted(xs)
    q1 = _quantile_sorted(xs, 0.25)
    q3 = _quantile_sorted(xs, 0.75)
    if xs.shape[0] < _FAST_MC_MIN_N:
        mc = _medcouple_naive_sorted(xs)
    else:
        zplus, zminus = _split_centered(xs, med)
        mc, a, b = _mc_search(xs, zplus, zminus, q1, q3, True)
        if a >= 0:
            return med, xs[a], xs[b]
    lo, hi = _fence_from_mc(q1, q3, mc)
    a, b = _whisker_indices(xs, lo, hi)
    return med, xs[a], xs[b]


@njit(cache=True)
def _ao_value(x, med, w1, w2):
    if x > med:
        s = w2 - med
        return (x - med) / s if s > 0 else np.inf
    if x < med:
        s = med - w1
        return (med - x) / s if s > 0 else np.inf
    return 0.0


@njit(cache=True)
def _max_ao(cloud, dirs, members, queries, self_scoring, out):
    """out[i] = max over rows v of dirs of the univariate AO of queries[i] @ v.

    ``members[d]`` lists the cloud rows whose hyperplane produced direction
    d (-1 for none).  Their projections coincide in exact arithmetic, so
    they are set to their mean: the tie then does not depend on rounding,
    which keeps the score affine invariant.  With ``self_scoring`` the
    queries are the cloud rows themselves and share the snapped values.
    """
    n, p = cloud.shape
    m = queries.shape[0]
    k = members.shape[1]
    proj = np.empty(n)
    for i in range(m):
        out[i] = 0.0
    for d in range(dirs.shape[0]):
        for r in range(n):
            s = 0.0
            for c in range(p):
                s += cloud[r, c] * dirs[d, c]
            proj[r] = s
        if k > 0 and members[d, 0] >= 0:
            s = 0.0
            for t in range(k):
                s += proj[members[d, t]]
            s /= k
            for t in range(k):
                proj[members[d, t]] = s
        xs = np.sort(proj)
        med, w1, w2 = _whiskers_sorted(xs)
        for i in range(m):
            if self_scoring:
                s = proj[i]
            else:
                s = 0.0
                for c in range(p):
                    s += queries[i, c] * dirs[d, c]
            v = _ao_value(s, med, w1, w2)
            if v > out[i]:
                out[i] = v


@njit(cache=True)
def _hyperplane_normal(points, out):
    """Unit normal of the hyperplane through the rows of ``points`` (p x p).

    Writes into ``out`` and returns False when the points do not span a
    unique hyperplane.
    """
    p = points.shape[1]
    if p == 1:
        out[0] = 1.0
        return True
    if p == 2:
        d0 = points[1, 0] - points[0, 0]
        d1 = points[1, 1] - points[0, 1]
        nrm = np.sqrt(d0 * d0 + d1 * d1)
        if not nrm > 0:
            return False
        out[0] = -d1 / nrm
        out[1] = d0 / nrm
        return True
    if p == 3:
        a0 = points[1, 0] - points[0, 0]
        a1 = points[1, 1] - points[0, 1]
        a2 = points[1, 2] - points[0, 2]
        b0 = points[2, 0] - points[0, 0]
        b1 = points[2, 1] - points[0, 1]
        b2 = points[2, 2] - points[0, 2]
        c0 = a1 * b2 - a2 * b1
        c1 = a2 * b0 - a0 * b2
        c2 = a0 * b1 - a1 * b0
        cn = np.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
        # singular values of the 2x3 difference matrix from trace and
        # determinant of its Gram matrix
        tr = a0 * a0 + a1 * a1 + a2 * a2 + b0 * b0 + b1 * b1 + b2 * b2
        disc = tr * tr - 4.0 * cn * cn
        if disc < 0:
            disc = 0.0
        smax = np.sqrt(0.5 * (tr + np.sqrt(disc)))
        if not smax > 0:
            return False
        smin = cn / smax
        if smin < _DEGENERACY_RTOL * smax:
            return False
        out[0] = c0 / cn
        out[1] = c1 / cn
        out[2] = c2 / cn
        return True
    diffs = np.empty((p - 1, p))
    for r in range(p - 1):
        for c in range(p):
            diffs[r, c] = points[r + 1, c] - points[0, c]
    _, s, vt = np.linalg.svd(diffs, full_matrices=True)
    if not s[0] > 0 or s[p - 2] < _DEGENERACY_RTOL * s[0]:
        return False
    for c in range(p):
        out[c] = vt[p - 1, c]
    return True


@njit(cache=True)
def _normals_from_subsets(cloud, subsets, dirs, ok):
    p = cloud.shape[1]
    pts = np.empty((p, p))
    v = np.empty(p)
    for d in range(subsets.shape[0]):
        for r in range(p):
            for c in range(p):
                pts[r, c] = cloud[subsets[d, r], c]
        ok[d] = _hyperplane_normal(pts, v)
        for c in range(p):
            dirs[d, c] = v[c] if ok[d] else 0.0


@njit(parallel=True, cache=True)
def _grid_ao(clouds, queries, self_scoring, subsets, out, failed):
    """Projection AO per grid point.

    clouds is (P, n, p), queries (P, m, p), out (P, m); ``self_scoring``
    means queries and clouds hold the same rows.  Directions are the
    hyperplane normals through ``subsets`` rows of each cloud.  Grid points
    where a subset is degenerate are marked in ``failed`` and left for the
    caller, which owns the resampling logic.
    """
    npix = clouds.shape[0]
    nd = subsets.shape[0]
    p = clouds.shape[2]
    for g in prange(npix):
        cloud = clouds[g]
        dirs = np.empty((nd, p))
        ok = np.empty(nd, dtype=np.bool_)
        _normals_from_subsets(cloud, subsets, dirs, ok)
        bad = False
        for d in range(nd):
            if not ok[d]:
                bad = True
                break
        if bad:
            failed[g] = True
            continue
        failed[g] = False
        _max_ao(cloud, dirs, subsets, queries[g], self_scoring, out[g])


@njit(parallel=True, cache=True)
def _grid_univariate_ao(clouds, queries, out):
    """p = 1 fast path: clouds (P, n), queries (P, m), out (P, m)."""
    for g in prange(clouds.shape[0]):
        xs = np.sort(clouds[g])
        med, w1, w2 = _whiskers_sorted(xs)
        for i in range(queries.shape[1]):
            out[g, i] = _ao_value(queries[g, i], med, w1, w2)
