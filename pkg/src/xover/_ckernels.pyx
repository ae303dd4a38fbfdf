# cython: language_level=3
"""Compiled hot kernels: cyclic Jacobi eigensolver and batched information spectra.

Same API as ``xover._pykernels``. The batched kernel releases the GIL so
design chunks can be evaluated from a thread pool.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

__all__ = ["jacobi_eigh", "block_spectra"]


cdef double _off_norm(const double* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                s += a[i * n + j] * a[i * n + j]
    return sqrt(s)


cdef void _jacobi(double* a, double* v, double* w, Py_ssize_t n,
                  double rel_tol, int max_sweeps) noexcept nogil:
    # a is destroyed; v receives eigenvectors (columns), w ascending eigenvalues
    cdef Py_ssize_t i, j, k, p, q
    cdef int sweep
    cdef double off0, thresh, apq, app, aqq, g, theta, tn, c, s, x, y, key
    for i in range(n):
        for j in range(n):
            v[i * n + j] = 1.0 if i == j else 0.0
    off0 = _off_norm(a, n)
    thresh = rel_tol * off0
    for sweep in range(max_sweeps):
        if _off_norm(a, n) <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p * n + q]
                if apq == 0.0:
                    continue
                app = a[p * n + p]
                aqq = a[q * n + q]
                g = 100.0 * fabs(apq)
                if fabs(app) + g == fabs(app) and fabs(aqq) + g == fabs(aqq):
                    a[p * n + q] = 0.0
                    a[q * n + p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                if fabs(theta) > 1e150:
                    tn = 0.5 / theta  # theta**2 would overflow
                else:
                    tn = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        tn = -tn
                c = 1.0 / sqrt(tn * tn + 1.0)
                s = tn * c
                for k in range(n):
                    x = a[k * n + p]
                    y = a[k * n + q]
                    a[k * n + p] = c * x - s * y
                    a[k * n + q] = s * x + c * y
                for k in range(n):
                    x = a[p * n + k]
                    y = a[q * n + k]
                    a[p * n + k] = c * x - s * y
                    a[q * n + k] = s * x + c * y
                a[p * n + q] = 0.0
                a[q * n + p] = 0.0
                for k in range(n):
                    x = v[k * n + p]
                    y = v[k * n + q]
                    v[k * n + p] = c * x - s * y
                    v[k * n + q] = s * x + c * y
    for i in range(n):
        w[i] = a[i * n + i]
    # stable insertion sort, carrying eigenvector columns along
    for i in range(1, n):
        key = w[i]
        for k in range(n):
            a[k] = v[k * n + i]
        j = i - 1
        while j >= 0 and w[j] > key:
            w[j + 1] = w[j]
            for k in range(n):
                v[k * n + j + 1] = v[k * n + j]
            j -= 1
        w[j + 1] = key
        for k in range(n):
            v[k * n + j + 1] = a[k]


def jacobi_eigh(a, double rel_tol=1e-12, int max_sweeps=100):
    """Cyclic Jacobi eigendecomposition; returns (ascending values, column vectors)."""
    cdef double[:, ::1] work = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = work.shape[0]
    vec = np.empty((n, n), dtype=np.float64)
    val = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] v = vec
    cdef double[::1] w = val
    if n == 0:
        return val, vec
    with nogil:
        _jacobi(&work[0, 0], &v[0, 0], &w[0], n, rel_tol, max_sweeps)
    return val, vec


def block_spectra(seqs, counts, vstar, int t, double zero_rtol, double abs_scale):
    """Ascending spectra (D, t) of the direct-effect information block per design."""
    cdef cnp.int64_t[:, ::1] sq = np.ascontiguousarray(seqs, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cn = np.ascontiguousarray(counts, dtype=np.int64)
    cdef double[:, ::1] vs = np.ascontiguousarray(vstar, dtype=np.float64)
    cdef Py_ssize_t n_seq = sq.shape[0], p = sq.shape[1], n_des = cn.shape[0]
    cdef Py_ssize_t m2 = 2 * t
    cdef Py_ssize_t s, i, j, a, b, d, r0, r1, c0, c1
    cdef double val, nsub, cut, wmax, acc
    cdef cnp.int64_t cs

    w_seq_arr = np.zeros((n_seq, m2, m2), dtype=np.float64)
    cdef double[:, :, ::1] wsq = w_seq_arr
    for s in range(n_seq):
        for i in range(p):
            for j in range(p):
                val = vs[i, j]
                r0 = sq[s, i]
                c0 = sq[s, j]
                wsq[s, r0, c0] += val
                if j > 0:
                    c1 = t + sq[s, j - 1]
                    wsq[s, r0, c1] += val
                if i > 0:
                    r1 = t + sq[s, i - 1]
                    wsq[s, r1, c0] += val
                    if j > 0:
                        wsq[s, r1, t + sq[s, j - 1]] += val

    out_arr = np.empty((n_des, t), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] m = np.empty((m2, m2))
    cdef double[:, ::1] ssum = np.empty((p, m2))
    cdef double[:, ::1] vss = np.empty((p, m2))
    cdef double[:, ::1] c22 = np.empty((t, t))
    cdef double[:, ::1] v22 = np.empty((t, t))
    cdef double[::1] w22 = np.empty(t)
    cdef double[:, ::1] pinv = np.empty((t, t))
    cdef double[:, ::1] tmp = np.empty((t, t))
    cdef double[:, ::1] info = np.empty((t, t))

    with nogil:
        for d in range(n_des):
            nsub = 0.0
            for a in range(m2):
                for b in range(m2):
                    m[a, b] = 0.0
            for i in range(p):
                for a in range(m2):
                    ssum[i, a] = 0.0
            for s in range(n_seq):
                cs = cn[d, s]
                if cs == 0:
                    continue
                nsub += cs
                for a in range(m2):
                    for b in range(m2):
                        m[a, b] += cs * wsq[s, a, b]
                for i in range(p):
                    ssum[i, sq[s, i]] += cs
                    if i > 0:
                        ssum[i, t + sq[s, i - 1]] += cs
            # m -= S' V* S / n
            for i in range(p):
                for b in range(m2):
                    acc = 0.0
                    for j in range(p):
                        acc += vs[i, j] * ssum[j, b]
                    vss[i, b] = acc
            for a in range(m2):
                for b in range(m2):
                    acc = 0.0
                    for i in range(p):
                        acc += ssum[i, a] * vss[i, b]
                    m[a, b] -= acc / nsub
            # Moore-Penrose inverse of the carryover block
            for a in range(t):
                for b in range(t):
                    c22[a, b] = m[t + a, t + b]
            _jacobi(&c22[0, 0], &v22[0, 0], &w22[0], t, 1e-12, 100)
            wmax = abs_scale
            for a in range(t):
                if fabs(w22[a]) > wmax:
                    wmax = fabs(w22[a])
            cut = zero_rtol * wmax
            for a in range(t):
                for b in range(t):
                    acc = 0.0
                    for i in range(t):
                        if w22[i] > cut:
                            acc += v22[a, i] * v22[b, i] / w22[i]
                    pinv[a, b] = acc
            # info = C11 - C12 pinv C21
            for a in range(t):
                for b in range(t):
                    acc = 0.0
                    for i in range(t):
                        acc += m[a, t + i] * pinv[i, b]
                    tmp[a, b] = acc
            for a in range(t):
                for b in range(t):
                    acc = 0.0
                    for i in range(t):
                        acc += tmp[a, i] * m[b, t + i]
                    info[a, b] = m[a, b] - acc
            for a in range(t):
                for b in range(a + 1, t):
                    acc = 0.5 * (info[a, b] + info[b, a])
                    info[a, b] = acc
                    info[b, a] = acc
            _jacobi(&info[0, 0], &v22[0, 0], &out[d, 0], t, 1e-12, 100)
    return out_arr
