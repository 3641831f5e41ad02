"""Hot inner loops, each in a numba and a pure-numpy flavour.

The numba versions are used when numba imports cleanly and the environment
variable ``MANTAE_DISABLE_NUMBA`` is unset (or ``0``).  Both flavours are
always importable under explicit names so the benchmark can time them side
by side; the unsuffixed names are the dispatched ones.

Index-copy kernels (unfold/fold) are bitwise identical across flavours.
Floating point kernels agree to rounding.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

NUMBA_DISABLED = os.environ.get("MANTAE_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED

JACOBI_MAX_SWEEPS = 100


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# unfold / fold
#
# Mode-n unfolding with Kolda-Bader column order: the column index of entry
# (i_1..i_N) is sum_{k != n} i_k * prod_{m < k, m != n} I_m, so the earliest
# remaining mode varies fastest.  Matrices are returned row-major.


def _index_maps(shape, mode):
    """C-order -> Fortran-order index maps for the modes before/after ``mode``."""
    before, after = tuple(shape[:mode]), tuple(shape[mode + 1:])
    p = int(np.prod(before, dtype=np.int64))
    q = int(np.prod(after, dtype=np.int64))
    pmap = np.arange(p, dtype=np.int64).reshape(before, order="F").ravel(order="C")
    qmap = np.arange(q, dtype=np.int64).reshape(after, order="F").ravel(order="C")
    return pmap, qmap


@_njit
def _unfold_nb(x3, pmap, qmap):
    # x3 is the (P, I, Q) row-major view; column of (p, q) is pmap[p] + P * qmap[q]
    P, I, Q = x3.shape
    out = np.empty((I, P * Q), dtype=x3.dtype)
    for p in range(P):
        pf = pmap[p]
        for r in range(I):
            for q in range(Q):
                out[r, pf + P * qmap[q]] = x3[p, r, q]
    return out


@_njit
def _fold_nb(m, pmap, qmap, P, Q):
    I = m.shape[0]
    out = np.empty((P, I, Q), dtype=m.dtype)
    for p in range(P):
        pf = pmap[p]
        for r in range(I):
            for q in range(Q):
                out[p, r, q] = m[r, pf + P * qmap[q]]
    return out


def unfold_numba(x, mode):
    pmap, qmap = _index_maps(x.shape, mode)
    x3 = np.ascontiguousarray(x).reshape(pmap.size, x.shape[mode], qmap.size)
    return _unfold_nb(x3, pmap, qmap)


def fold_numba(m, mode, shape):
    pmap, qmap = _index_maps(shape, mode)
    out = _fold_nb(np.ascontiguousarray(m), pmap, qmap, pmap.size, qmap.size)
    return out.reshape(tuple(shape))


def unfold_numpy(x, mode):
    moved = np.moveaxis(x, mode, 0)
    return np.ascontiguousarray(moved.reshape(x.shape[mode], -1, order="F"))


def fold_numpy(m, mode, shape):
    shape = tuple(shape)
    moved_shape = (shape[mode],) + shape[:mode] + shape[mode + 1:]
    moved = np.reshape(m, moved_shape, order="F")
    return np.ascontiguousarray(np.moveaxis(moved, 0, mode))


# ---------------------------------------------------------------------------
# cyclic Jacobi eigensolver for symmetric matrices


@_njit
def _rotation_tangent(app, aqq, apq):
    theta = (aqq - app) / (2.0 * apq)
    if abs(theta) > 1e150:
        # theta^2 would overflow; t ~ 1 / (2 theta)
        return 0.5 / theta
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    return -t if theta < 0.0 else t


@_njit
def _jacobi_nb(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += a[i, j] * a[i, j]
    thresh = tol * np.sqrt(total)
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if np.sqrt(off) <= thresh:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                t = _rotation_tangent(a[p, p], a[q, q], apq)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v, sweeps


def jacobi_eigh_numba(a, tol=1e-12, max_sweeps=JACOBI_MAX_SWEEPS):
    a = np.array(a, dtype=np.float64, copy=True)
    return _jacobi_nb(a, tol, max_sweeps)


def jacobi_eigh_numpy(a, tol=1e-12, max_sweeps=JACOBI_MAX_SWEEPS):
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    thresh = tol * np.sqrt(np.sum(a * a))
    sweeps = 0
    for _ in range(max_sweeps):
        offdiag = a - np.diag(np.diag(a))
        if np.sqrt(np.sum(offdiag * offdiag)) <= thresh:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                t = _rotation_tangent(a[p, p], a[q, q], apq)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, sweeps


# ---------------------------------------------------------------------------
# k-means assignment step (squared Euclidean)


@_njit
def _assign_nb(points, centroids):
    n, d = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(k):
            acc = 0.0
            for f in range(d):
                diff = points[i, f] - centroids[j, f]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = j
        labels[i] = arg
        dist[i] = best
    return labels, dist


def assign_numba(points, centroids):
    return _assign_nb(np.ascontiguousarray(points, dtype=np.float64),
                      np.ascontiguousarray(centroids, dtype=np.float64))


def assign_numpy(points, centroids):
    d2 = np.empty((points.shape[0], centroids.shape[0]))
    for j in range(centroids.shape[0]):
        diff = points - centroids[j]
        d2[:, j] = np.einsum("ij,ij->i", diff, diff)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


# ---------------------------------------------------------------------------
# Adam update, in place on (param, m, v).  Both flavours round identically.


@_njit
def _adam_nb(p, g, m, v, b1, b2, eps, c2, scale):
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        p[i] -= mi / (np.sqrt(vi / c2) + eps) * scale


def adam_numba(p, g, m, v, b1, b2, eps, c2, scale):
    _adam_nb(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1), b1, b2, eps, c2, scale)


def adam_numpy(p, g, m, v, b1, b2, eps, c2, scale):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    denom = v / c2
    np.sqrt(denom, out=denom)
    denom += eps
    step = np.divide(m, denom, out=denom)
    step *= scale
    p -= step


if USE_NUMBA:
    unfold, fold = unfold_numba, fold_numba
    jacobi_eigh, assign, adam = jacobi_eigh_numba, assign_numba, adam_numba
else:
    unfold, fold = unfold_numpy, fold_numpy
    jacobi_eigh, assign, adam = jacobi_eigh_numpy, assign_numpy, adam_numpy
