# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _vecmat(const double[:, ::1] w, const double[::1] v, double[::1] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double vi
    for j in range(n):
        out[j] = 0.0
    for i in range(n):
        vi = v[i]
        for j in range(n):
            out[j] += vi * w[i, j]


cdef inline void _matvec(const double[:, ::1] w, const double[::1] x, double[::1] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += w[i, j] * x[j]
        out[i] = acc


def left_fixed_vector(weights, double tol, long max_iter):
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0]
    cdef double[::1] v = np.full(n, 1.0 / n)
    cdef double[::1] nxt = np.empty(n)
    cdef double[::1] tmp
    cdef double total, d
    cdef double delta = np.inf
    cdef long it = 0
    cdef Py_ssize_t j
    with nogil:
        for it in range(1, max_iter + 1):
            _vecmat(w, v, nxt, n)
            total = 0.0
            for j in range(n):
                total += nxt[j]
            delta = 0.0
            for j in range(n):
                nxt[j] /= total
                d = nxt[j] - v[j]
                if d < 0:
                    d = -d
                if d > delta:
                    delta = d
            tmp = v
            v = nxt
            nxt = tmp
            if delta <= tol:
                break
    if delta <= tol:
        return np.asarray(v), it, True
    return np.asarray(v), max_iter, False


def consensus(weights, x, double tol, long max_rounds):
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0]
    cdef double[::1] cur = np.array(x, dtype=np.float64)
    cdef double[::1] nxt = np.empty(n)
    cdef double[::1] tmp
    cdef double lo, hi
    cdef long rounds = 0
    cdef Py_ssize_t j
    cdef bint done = False
    with nogil:
        for rounds in range(max_rounds + 1):
            lo = cur[0]
            hi = cur[0]
            for j in range(1, n):
                if cur[j] < lo:
                    lo = cur[j]
                elif cur[j] > hi:
                    hi = cur[j]
            if hi - lo <= tol:
                done = True
                break
            if rounds == max_rounds:
                break
            _matvec(w, cur, nxt, n)
            tmp = cur
            cur = nxt
            nxt = tmp
    return np.asarray(cur), rounds, done


def propagate(weights, x, long rounds):
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0]
    out_arr = np.empty((rounds + 1, n))
    cdef double[:, ::1] out = out_arr
    cdef long k
    out_arr[0] = x
    with nogil:
        for k in range(1, rounds + 1):
            _matvec(w, out[k - 1], out[k], n)
    return out_arr


def gini(values):
    cdef double[::1] xs = np.sort(np.asarray(values, dtype=np.float64))
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i
    cdef double num = 0.0, total = 0.0
    for i in range(n):
        num += (2.0 * (i + 1) - n - 1) * xs[i]
        total += xs[i]
    return num / (n * total)
